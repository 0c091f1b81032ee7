//! Oracle-resolution event records: question initialization, resolution
//! requests, price proposals, disputes, and final settlements across the
//! oracle and adapter deployments.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;

use crate::ids::{Address, Hash32};
use crate::time::iso_seconds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleEventType {
    Initialize,
    Request,
    Propose,
    Dispute,
    Settle,
}

impl OracleEventType {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Initialize => "initialize",
            Self::Request => "request",
            Self::Propose => "propose",
            Self::Dispute => "dispute",
            Self::Settle => "settle",
        }
    }

    /// The four main resolution states reported in quality metrics;
    /// adapter initializations are bookkeeping, not a resolution stage.
    pub const MAIN_STATES: [OracleEventType; 4] = [
        Self::Request,
        Self::Propose,
        Self::Dispute,
        Self::Settle,
    ];
}

impl fmt::Display for OracleEventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw byte payload rendered as lowercase 0x hex in the record format.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HexPayload(pub Vec<u8>);

impl Serialize for HexPayload {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let mut s = String::with_capacity(2 + 2 * self.0.len());
        s.push_str("0x");
        for b in &self.0 {
            s.push(char::from_digit((b >> 4) as u32, 16).unwrap());
            s.push(char::from_digit((b & 0xf) as u32, 16).unwrap());
        }
        ser.serialize_str(&s)
    }
}

impl<'de> Deserialize<'de> for HexPayload {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        let body = s.strip_prefix("0x").unwrap_or(&s);
        if body.len() % 2 != 0 {
            return Err(serde::de::Error::custom("odd-length hex payload"));
        }
        let mut out = Vec::with_capacity(body.len() / 2);
        let bytes = body.as_bytes();
        for pair in bytes.chunks(2) {
            let hi = (pair[0] as char)
                .to_digit(16)
                .ok_or_else(|| serde::de::Error::custom("invalid hex payload"))?;
            let lo = (pair[1] as char)
                .to_digit(16)
                .ok_or_else(|| serde::de::Error::custom("invalid hex payload"))?;
            out.push(((hi << 4) | lo) as u8);
        }
        Ok(Self(out))
    }
}

/// One oracle-side event. Identifier fields are optional because
/// different deployments expose different subsets; linking an event to
/// its canonical market is the bridge layer's job and lands in
/// `market_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEvent {
    pub tx_hash: Hash32,
    pub log_index: u64,
    pub block_number: u64,
    #[serde(with = "iso_seconds")]
    pub timestamp: DateTime<Utc>,
    pub event_type: OracleEventType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requester: Option<Address>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<Hash32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_id: Option<Hash32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market_id: Option<Hash32>,
    pub source_contract: Address,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<Address>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ancillary: Option<HexPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settled_price: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl OracleEvent {
    pub fn key(&self) -> (Hash32, u64) {
        (self.tx_hash, self.log_index)
    }

    /// Standard settlement prices are 0, 0.5 (unresolvable/split) or 1.
    pub fn is_standard_settle_price(price: f64) -> bool {
        price == 0.0 || price == 0.5 || price == 1.0
    }
}
