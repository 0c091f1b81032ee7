//! Identifier newtypes shared across the three data layers.
//!
//! Hex identifiers serialize as lowercase `0x`-prefixed strings. The
//! all-zero value doubles as "absent" where upstream sources leave a
//! bytes field unset; [`Hash32::is_zero`] is the missing-value check.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdParseError {
    #[error("expected 0x prefix in `{0}`")]
    MissingPrefix(String),
    #[error("expected {expected} hex chars, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("invalid hex char `{0}`")]
    BadChar(char),
}

fn decode_hex<const N: usize>(s: &str) -> Result<[u8; N], IdParseError> {
    let body = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .ok_or_else(|| IdParseError::MissingPrefix(s.to_string()))?;
    if body.len() != 2 * N {
        return Err(IdParseError::BadLength {
            expected: 2 * N,
            got: body.len(),
        });
    }
    let mut out = [0u8; N];
    for (i, chunk) in body.as_bytes().chunks(2).enumerate() {
        let hi = hex_val(chunk[0] as char)?;
        let lo = hex_val(chunk[1] as char)?;
        out[i] = (hi << 4) | lo;
    }
    Ok(out)
}

fn hex_val(c: char) -> Result<u8, IdParseError> {
    c.to_digit(16).map(|d| d as u8).ok_or(IdParseError::BadChar(c))
}

fn encode_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(2 + 2 * bytes.len());
    s.push_str("0x");
    for b in bytes {
        s.push(char::from_digit((b >> 4) as u32, 16).unwrap());
        s.push(char::from_digit((b & 0xf) as u32, 16).unwrap());
    }
    s
}

macro_rules! hex_id {
    ($(#[$doc:meta])* $name:ident, $len:expr) => {
        $(#[$doc])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const ZERO: Self = Self([0u8; $len]);

            pub fn from_bytes(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }

            /// All-zero identifiers stand in for "absent" upstream fields.
            pub fn is_zero(&self) -> bool {
                self.0.iter().all(|b| *b == 0)
            }

            pub fn parse(s: &str) -> Result<Self, IdParseError> {
                decode_hex::<$len>(s).map(Self)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&encode_hex(&self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self)
            }
        }

        impl FromStr for $name {
            type Err = IdParseError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::parse(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
                ser.serialize_str(&self.to_string())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
                let s = String::deserialize(de)?;
                Self::parse(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_id!(
    /// 32-byte identifier: transaction hashes, condition ids, question ids.
    Hash32,
    32
);

hex_id!(
    /// 20-byte account or contract address.
    Address,
    20
);

/// Outcome-token identifier as it appears in exchange logs: an opaque
/// decimal string (uint256 on chain). The empty string means "absent".
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct TokenId(pub String);

impl TokenId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TokenId({})", self.0)
    }
}

impl From<&str> for TokenId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}
