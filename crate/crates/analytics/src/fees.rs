//! Effective fee rates and fee-regime summaries over market-day rows.
//!
//! The market-level effective rate restricts both numerator and
//! denominator to days with positive fees, so the long zero-fee era
//! does not dilute the measured rate.

use chrono::NaiveDate;
use polyflow_core::Hash32;
use polyflow_engine::MarketDaySummary;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeRateRow {
    pub market_id: Hash32,
    /// Σ fee / Σ value over positive-fee days.
    pub effective_rate: f64,
    /// Cumulative trade value over the same positive-fee days.
    pub volume: f64,
    pub volume_base: u64,
    pub fee_base: u64,
    pub category: String,
    pub positive_fee_days: u32,
}

/// One row per market with at least one positive-fee day; all-zero-fee
/// markets are absent from the output.
pub fn effective_fee_rates(
    summaries: &[MarketDaySummary],
    market_topics: &BTreeMap<Hash32, String>,
) -> Vec<FeeRateRow> {
    let mut per_market: BTreeMap<Hash32, (u128, u128, u32)> = BTreeMap::new();
    for s in summaries {
        if s.total_fee_base == 0 {
            continue;
        }
        let acc = per_market.entry(s.market_id).or_insert((0, 0, 0));
        acc.0 += s.total_fee_base as u128;
        acc.1 += s.total_trade_value_base as u128;
        acc.2 += 1;
    }
    per_market
        .into_iter()
        .filter(|(_, (_, value, _))| *value > 0)
        .map(|(market_id, (fee, value, days))| FeeRateRow {
            market_id,
            effective_rate: fee as f64 / value as f64,
            volume: value as f64 / 1e6,
            volume_base: value as u64,
            fee_base: fee as u64,
            category: market_topics
                .get(&market_id)
                .cloned()
                .unwrap_or_else(|| "Other".to_string()),
            positive_fee_days: days,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryFeeSummary {
    pub category: String,
    /// Trade value across all days of the category's markets.
    pub trade_value: f64,
    pub total_fee: f64,
    pub first_positive_fee_day: Option<NaiveDate>,
    pub positive_fee_markets: u64,
}

/// Per-category totals plus the first day any market of the category
/// charged a fee.
pub fn fee_summary_by_category(
    summaries: &[MarketDaySummary],
    market_topics: &BTreeMap<Hash32, String>,
) -> Vec<CategoryFeeSummary> {
    struct Acc {
        value: u128,
        fee: u128,
        first_day: Option<NaiveDate>,
        positive_markets: std::collections::BTreeSet<Hash32>,
    }
    let mut per_cat: BTreeMap<String, Acc> = BTreeMap::new();
    for s in summaries {
        let cat = market_topics
            .get(&s.market_id)
            .cloned()
            .unwrap_or_else(|| "Other".to_string());
        let acc = per_cat.entry(cat).or_insert_with(|| Acc {
            value: 0,
            fee: 0,
            first_day: None,
            positive_markets: Default::default(),
        });
        acc.value += s.total_trade_value_base as u128;
        acc.fee += s.total_fee_base as u128;
        if s.total_fee_base > 0 {
            acc.first_day = Some(match acc.first_day {
                Some(d) => d.min(s.day),
                None => s.day,
            });
            acc.positive_markets.insert(s.market_id);
        }
    }
    per_cat
        .into_iter()
        .map(|(category, acc)| CategoryFeeSummary {
            category,
            trade_value: acc.value as f64 / 1e6,
            total_fee: acc.fee as f64 / 1e6,
            first_positive_fee_day: acc.first_day,
            positive_fee_markets: acc.positive_markets.len() as u64,
        })
        .collect()
}
