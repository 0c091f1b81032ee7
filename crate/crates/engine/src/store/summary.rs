//! Materialized per-market per-day aggregates. Every downstream
//! analysis reads these rows instead of rescanning fills.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use polyflow_core::{Address, Hash32, COLLATERAL_BASE_UNITS};

use super::{Entry, Store, StoreError};

/// One (market, UTC day) row. Value and fee are kept both as exact base
/// units (`*_base`, the audit path) and as decimal collateral units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketDaySummary {
    pub market_id: Hash32,
    pub day: NaiveDate,
    pub trade_count: u64,
    pub total_trade_value: f64,
    pub total_trade_value_base: u64,
    pub total_fee: f64,
    pub total_fee_base: u64,
    pub distinct_wallets: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_price_yes: Option<f64>,
}

/// Recomputes summary rows for every linked fill whose day falls in the
/// inclusive range (the full data span when `range` is `None`).
/// Recomputation upserts by (market, day), so repeating it over an
/// unchanged store writes identical rows.
pub fn materialize_summaries(
    store: &Store,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<u64, StoreError> {
    struct Acc {
        trade_count: u64,
        value_base: u128,
        fee_base: u128,
        wallets: BTreeSet<Address>,
        last: Option<(u64, u64, f64)>, // (block, log_index, yes price)
    }

    let mut groups: BTreeMap<(Hash32, NaiveDate), Acc> = BTreeMap::new();
    {
        let inner = store.read();
        for fill in inner.fills.values() {
            let Some(market_id) = fill.market_id else {
                continue;
            };
            let day = fill.meta.timestamp.date_naive();
            if let Some((from, to)) = range {
                if day < from || day > to {
                    continue;
                }
            }
            let acc = groups.entry((market_id, day)).or_insert_with(|| Acc {
                trade_count: 0,
                value_base: 0,
                fee_base: 0,
                wallets: BTreeSet::new(),
                last: None,
            });
            acc.trade_count += 1;
            acc.value_base += fill.collateral_amount() as u128;
            acc.fee_base += fill.fee as u128;
            acc.wallets.insert(fill.maker);
            acc.wallets.insert(fill.taker);

            // YES-side price of this fill; NO-side fills map via 1 - p
            let yes_price = inner.markets.get(&market_id).and_then(|m| {
                if fill.asset_id == m.yes_token {
                    Some(fill.price)
                } else if fill.asset_id == m.no_token {
                    Some(1.0 - fill.price)
                } else {
                    None
                }
            });
            if let Some(p) = yes_price {
                let pos = (fill.block_number, fill.log_index);
                if acc.last.map_or(true, |(b, l, _)| pos >= (b, l)) {
                    acc.last = Some((pos.0, pos.1, p));
                }
            }
        }
    }

    let rows: Vec<Entry> = groups
        .into_iter()
        .map(|((market_id, day), acc)| {
            let value_base = u64::try_from(acc.value_base).expect("day volume fits u64");
            let fee_base = u64::try_from(acc.fee_base).expect("day fees fit u64");
            Entry::Summary(MarketDaySummary {
                market_id,
                day,
                trade_count: acc.trade_count,
                total_trade_value: value_base as f64 / COLLATERAL_BASE_UNITS as f64,
                total_trade_value_base: value_base,
                total_fee: fee_base as f64 / COLLATERAL_BASE_UNITS as f64,
                total_fee_base: fee_base,
                distinct_wallets: acc.wallets.len() as u64,
                last_price_yes: acc.last.map(|(_, _, p)| p),
            })
        })
        .collect();
    let written = rows.len() as u64;
    store.commit(rows)?;
    Ok(written)
}
