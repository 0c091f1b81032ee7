//! Price-path cleaning and pre-event probability construction.
//!
//! Fill prices are never trusted as stored: every price is recomputed
//! from the exchanged amounts, and mirrored polluted rows (the spurious
//! full-price buy leg mirroring a real sell) are dropped before any
//! probability is derived.

use chrono::{DateTime, Utc};
use polyflow_core::{FillRecord, Side};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PricingError {
    #[error("no trades strictly before the cutoff")]
    NoPregameTrades,
}

/// A cleaned trade ready for probability aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricedTrade {
    #[serde(with = "polyflow_core::time::iso_seconds")]
    pub timestamp: DateTime<Utc>,
    pub price: f64,
    pub size: f64,
}

impl From<&FillRecord> for PricedTrade {
    fn from(f: &FillRecord) -> Self {
        Self {
            timestamp: f.meta.timestamp,
            price: f.price,
            size: f.size,
        }
    }
}

/// Recomputes every price from the raw exchanged amounts and filters:
///
/// * rows with a zero side are dropped (no price exists);
/// * a buy leg at exactly price 1.0 is dropped only when a mirror row
///   (same transaction hash, same token amount, complementary side)
///   exists — standalone full-price fills are legitimate settlements
///   and retained;
/// * every retained price lies in (0, 1].
pub fn clean_fills_for_pricing(fills: &[FillRecord]) -> Vec<FillRecord> {
    let mut out = Vec::with_capacity(fills.len());
    for fill in fills {
        let Ok(price) = fill.recomputed_price() else {
            continue;
        };
        if !(price > 0.0 && price <= 1.0) {
            continue;
        }
        if fill.meta.side == Side::Buy && price == 1.0 {
            let mirrored = fills.iter().any(|other| {
                other.key() != fill.key()
                    && other.tx_hash == fill.tx_hash
                    && other.meta.side == Side::Sell
                    && other.token_amount() == fill.token_amount()
            });
            if mirrored {
                continue;
            }
        }
        let mut cleaned = fill.clone();
        cleaned.price = price;
        cleaned.size = fill.token_amount() as f64 / polyflow_core::COLLATERAL_BASE_UNITS as f64;
        out.push(cleaned);
    }
    out
}

/// Size-weighted mean price over trades strictly before the cutoff:
/// Σ sᵢpᵢ / Σ sᵢ.
pub fn size_weighted_prob(
    trades: &[PricedTrade],
    cutoff: DateTime<Utc>,
) -> Result<f64, PricingError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for t in trades {
        if t.timestamp < cutoff {
            num += t.size * t.price;
            den += t.size;
        }
    }
    if den == 0.0 {
        return Err(PricingError::NoPregameTrades);
    }
    Ok(num / den)
}
