//! Fill-level trade settlement records decoded from exchange
//! `OrderFilled` logs.
//!
//! A fill is one maker/taker leg of an execution; one taker order
//! matched against several resting orders emits several fills under the
//! same transaction hash, so `(tx_hash, log_index)` is the dedup key.
//! Amounts are exact integers in base units (6-decimal collateral
//! convention); `size` and `price` are decimal views derived from them.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{Address, Hash32, TokenId};
use crate::time::iso_seconds;

/// Base units per whole collateral/token unit (6 decimals).
pub const COLLATERAL_BASE_UNITS: u64 = 1_000_000;

/// Which exchange contract emitted the fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceContract {
    CtfExchange,
    NegriskExchange,
}

/// Taker side of the execution: `Buy` means the taker paid collateral
/// and received outcome tokens, `Sell` the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

/// Non-key fill attributes: source contract, block timestamp, side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMeta {
    pub source_contract: SourceContract,
    #[serde(with = "iso_seconds")]
    pub timestamp: DateTime<Utc>,
    pub side: Side,
}

/// One fill-level settlement event.
///
/// `maker_amount` / `taker_amount` are what each party gave, in base
/// units. `market_id` is the resolved condition id; it stays unset until
/// the traded token can be linked to a canonical market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillRecord {
    pub tx_hash: Hash32,
    pub log_index: u64,
    pub block_number: u64,
    pub maker: Address,
    pub taker: Address,
    pub asset_id: TokenId,
    pub maker_amount: u64,
    pub taker_amount: u64,
    pub fee: u64,
    pub size: f64,
    pub price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market_id: Option<Hash32>,
    pub meta: FillMeta,
}

impl FillRecord {
    /// Dedup key across the fill relation.
    pub fn key(&self) -> (Hash32, u64) {
        (self.tx_hash, self.log_index)
    }

    /// Collateral base units moved in this fill.
    pub fn collateral_amount(&self) -> u64 {
        match self.meta.side {
            Side::Buy => self.taker_amount,
            Side::Sell => self.maker_amount,
        }
    }

    /// Outcome-token base units moved in this fill.
    pub fn token_amount(&self) -> u64 {
        match self.meta.side {
            Side::Buy => self.maker_amount,
            Side::Sell => self.taker_amount,
        }
    }

    /// Recomputes the execution price from the raw exchanged amounts.
    pub fn recomputed_price(&self) -> Result<f64, PriceError> {
        derive_fill_price(
            self.maker_amount,
            self.taker_amount,
            ExchangeDirection::from_side(self.meta.side),
        )
    }

    /// Fills `size` and `price` from the integer amounts, keeping the
    /// stored decimals consistent with the audit-path integers.
    pub fn with_derived_decimals(mut self) -> Result<Self, PriceError> {
        self.price = self.recomputed_price()?;
        self.size = self.token_amount() as f64 / COLLATERAL_BASE_UNITS as f64;
        Ok(self)
    }
}

/// Orientation of an exchange: which asset the maker gave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeDirection {
    /// Maker gave collateral, taker gave outcome tokens.
    CollateralForToken,
    /// Maker gave outcome tokens, taker gave collateral.
    TokenForCollateral,
}

impl ExchangeDirection {
    pub fn from_side(side: Side) -> Self {
        match side {
            Side::Buy => Self::TokenForCollateral,
            Side::Sell => Self::CollateralForToken,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PriceError {
    #[error("zero amount in fill ({maker_amount}, {taker_amount})")]
    ZeroAmount { maker_amount: u64, taker_amount: u64 },
}

/// Execution price as collateral units per token unit, regardless of
/// which side of the exchange held the collateral. Values above 1 are
/// returned as-is; the caller decides whether to flag them.
pub fn derive_fill_price(
    maker_amount: u64,
    taker_amount: u64,
    direction: ExchangeDirection,
) -> Result<f64, PriceError> {
    if maker_amount == 0 || taker_amount == 0 {
        return Err(PriceError::ZeroAmount {
            maker_amount,
            taker_amount,
        });
    }
    let (collateral, tokens) = match direction {
        ExchangeDirection::CollateralForToken => (maker_amount, taker_amount),
        ExchangeDirection::TokenForCollateral => (taker_amount, maker_amount),
    };
    Ok(collateral as f64 / tokens as f64)
}
