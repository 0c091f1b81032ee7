//! Dataset quality metrics: scale, linkage completeness, and
//! cross-layer consistency, computed exactly from store contents.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use polyflow_core::{Hash32, OracleEventType};

use crate::bridge::BridgeStats;

use super::Store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTypeLinkage {
    pub event_type: String,
    pub total: u64,
    pub linked: u64,
    pub rate: Option<f64>,
}

/// The quality report. Every rate is the ratio of the co-reported
/// counts; rates over an empty denominator are undefined, not zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub total_markets: u64,
    pub traded_markets: u64,
    pub traded_rate: Option<f64>,
    pub oracle_linked_markets: u64,
    pub oracle_linked_rate: Option<f64>,
    pub total_fills: u64,
    pub linked_fills: u64,
    pub fill_link_rate: Option<f64>,
    pub total_oracle_events: u64,
    pub linked_oracle_events: u64,
    pub oracle_event_link_rate: Option<f64>,
    pub per_event_type: Vec<EventTypeLinkage>,
    pub active_addresses: u64,
    pub market_day_rows: u64,
    pub broken_reference_count: u64,
    pub exhausted_retry_tokens: u64,
    pub bridge_conflicts: u64,
}

fn rate(linked: u64, total: u64) -> Option<f64> {
    if total == 0 {
        None
    } else {
        Some(linked as f64 / total as f64)
    }
}

/// Pure function of store contents: repeated calls agree exactly.
pub fn compute_quality(store: &Store) -> QualityReport {
    let inner = store.read();

    let total_markets = inner.markets.len() as u64;

    let mut traded: BTreeSet<Hash32> = BTreeSet::new();
    let mut addresses: BTreeSet<polyflow_core::Address> = BTreeSet::new();
    let mut linked_fills = 0u64;
    for f in inner.fills.values() {
        addresses.insert(f.maker);
        addresses.insert(f.taker);
        if let Some(m) = f.market_id {
            traded.insert(m);
            linked_fills += 1;
        }
    }

    let mut oracle_linked_markets: BTreeSet<Hash32> = BTreeSet::new();
    let mut linked_events = 0u64;
    let mut per_type: Vec<EventTypeLinkage> = OracleEventType::MAIN_STATES
        .iter()
        .map(|t| EventTypeLinkage {
            event_type: t.as_str().to_string(),
            total: 0,
            linked: 0,
            rate: None,
        })
        .collect();
    let mut broken = 0u64;
    for e in inner.oracle_events.values() {
        let linked = e.market_id.is_some();
        if let Some(m) = e.market_id {
            oracle_linked_markets.insert(m);
            linked_events += 1;
            if !inner.markets.contains_key(&m) {
                broken += 1;
            }
        }
        if let Some(row) = per_type
            .iter_mut()
            .find(|r| r.event_type == e.event_type.as_str())
        {
            row.total += 1;
            if linked {
                row.linked += 1;
            }
        }
    }
    for row in &mut per_type {
        row.rate = rate(row.linked, row.total);
    }

    for s in inner.summaries.values() {
        if !inner.markets.contains_key(&s.market_id) {
            broken += 1;
        }
    }

    let total_fills = inner.fills.len() as u64;
    let total_events = inner.oracle_events.len() as u64;
    QualityReport {
        total_markets,
        traded_markets: traded.len() as u64,
        traded_rate: rate(traded.len() as u64, total_markets),
        oracle_linked_markets: oracle_linked_markets.len() as u64,
        oracle_linked_rate: rate(oracle_linked_markets.len() as u64, total_markets),
        total_fills,
        linked_fills,
        fill_link_rate: rate(linked_fills, total_fills),
        total_oracle_events: total_events,
        linked_oracle_events: linked_events,
        oracle_event_link_rate: rate(linked_events, total_events),
        per_event_type: per_type,
        active_addresses: addresses.len() as u64,
        market_day_rows: inner.summaries.len() as u64,
        broken_reference_count: broken,
        exhausted_retry_tokens: inner.retry_queue.values().filter(|r| r.exhausted).count() as u64,
        bridge_conflicts: inner.conflicts.len() as u64,
    }
}

/// Per-path linkage counters over the stored oracle relation, grouped
/// by the path tag recorded at link time.
pub fn compute_bridge_stats(store: &Store) -> BridgeStats {
    let inner = store.read();
    let mut stats = BridgeStats::default();
    for e in inner.oracle_events.values() {
        stats.total_events += 1;
        let row = stats
            .by_event_type
            .entry(e.event_type.as_str().to_string())
            .or_insert((0, 0));
        row.0 += 1;
        if e.market_id.is_some() {
            stats.linked_events += 1;
            row.1 += 1;
            if let Some(path) = e.meta.get("resolved_path") {
                *stats.by_path.entry(path.clone()).or_insert(0) += 1;
            }
        }
    }
    stats
}

fn group_digits(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn fmt_rate(r: Option<f64>) -> String {
    match r {
        Some(r) => format!("{:.2}%", r * 100.0),
        None => "-".to_string(),
    }
}

impl QualityReport {
    /// Plain-text table of the headline metrics plus per-state linkage
    /// and consistency counters.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<(String, String, String)> = vec![
            (
                "Total canonical markets".into(),
                group_digits(self.total_markets),
                "-".into(),
            ),
            (
                "Traded markets".into(),
                group_digits(self.traded_markets),
                fmt_rate(self.traded_rate),
            ),
            (
                "Oracle-linked markets".into(),
                group_digits(self.oracle_linked_markets),
                fmt_rate(self.oracle_linked_rate),
            ),
            (
                "Total fill-level trades".into(),
                group_digits(self.total_fills),
                "-".into(),
            ),
            (
                "Linked fill-level trades".into(),
                group_digits(self.linked_fills),
                fmt_rate(self.fill_link_rate),
            ),
            (
                "Total oracle events".into(),
                group_digits(self.total_oracle_events),
                "-".into(),
            ),
            (
                "Linked oracle events".into(),
                group_digits(self.linked_oracle_events),
                fmt_rate(self.oracle_event_link_rate),
            ),
            (
                "Active addresses".into(),
                group_digits(self.active_addresses),
                "-".into(),
            ),
            (
                "Materialized market-day observations".into(),
                group_digits(self.market_day_rows),
                "-".into(),
            ),
        ];
        for t in &self.per_event_type {
            rows.push((
                format!("Linked {} events", t.event_type),
                group_digits(t.linked),
                fmt_rate(t.rate),
            ));
        }
        rows.push((
            "Broken references".into(),
            group_digits(self.broken_reference_count),
            "-".into(),
        ));
        rows.push((
            "Exhausted retry tokens".into(),
            group_digits(self.exhausted_retry_tokens),
            "-".into(),
        ));
        rows.push((
            "Bridge conflicts".into(),
            group_digits(self.bridge_conflicts),
            "-".into(),
        ));

        let name_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6);
        let val_w = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        out.push_str(&format!(
            "{:<name_w$}  {:>val_w$}  {:>8}\n",
            "Metric", "Value", "Rate"
        ));
        for (name, value, rate) in rows {
            out.push_str(&format!("{name:<name_w$}  {value:>val_w$}  {rate:>8}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{Entry, MarketDaySummary};
    use chrono::{NaiveDate, TimeZone, Utc};
    use polyflow_core::{
        Address, FillMeta, FillRecord, MarketMetadata, MarketRecord, OracleEvent, Provenance,
        Side, SourceContract, TokenId,
    };

    fn h(n: u8) -> Hash32 {
        Hash32::from_bytes([n; 32])
    }

    fn market(n: u8) -> MarketRecord {
        MarketRecord {
            gamma_id: Some(format!("g{n}")),
            condition_id: h(n),
            question_id: None,
            oracle_address: Address::from_bytes([1; 20]),
            yes_token: TokenId::new(format!("{}", 100 + 2 * n as u32)),
            no_token: TokenId::new(format!("{}", 101 + 2 * n as u32)),
            clob_token_ids: None,
            metadata: MarketMetadata {
                slug: format!("m{n}"),
                title: String::new(),
                description: String::new(),
                created_at: Utc.with_ymd_and_hms(2025, 10, 1, 0, 0, 0).unwrap(),
                end_date: None,
                category: None,
                tags: vec![],
                event_slug: None,
                series_slug: None,
            },
            provenance: Provenance::Api,
        }
    }

    fn linked_fill(n: u8, market: u8) -> FillRecord {
        FillRecord {
            tx_hash: h(n),
            log_index: 0,
            block_number: n as u64,
            maker: Address::from_bytes([n; 20]),
            taker: Address::from_bytes([n + 1; 20]),
            asset_id: TokenId::new(format!("{}", 100 + 2 * market as u32)),
            maker_amount: 100,
            taker_amount: 50,
            fee: 0,
            size: 0.0,
            price: 0.0,
            market_id: Some(h(market)),
            meta: FillMeta {
                source_contract: SourceContract::CtfExchange,
                timestamp: Utc.with_ymd_and_hms(2025, 10, 2, 0, 0, 0).unwrap(),
                side: Side::Buy,
            },
        }
        .with_derived_decimals()
        .unwrap()
    }

    #[test]
    fn traded_rate_example() {
        let store = Store::in_memory();
        let mut batch: Vec<Entry> = (1..=10).map(|n| Entry::Market(market(n))).collect();
        for n in 1..=8u8 {
            batch.push(Entry::Fill(linked_fill(n + 50, n)));
        }
        store.commit(batch).unwrap();
        let q = compute_quality(&store);
        assert_eq!(q.total_markets, 10);
        assert_eq!(q.traded_markets, 8);
        assert_eq!(q.traded_rate, Some(0.8));
    }

    #[test]
    fn empty_store_has_undefined_rates() {
        let q = compute_quality(&Store::in_memory());
        assert_eq!(q.total_markets, 0);
        assert_eq!(q.traded_rate, None);
        assert_eq!(q.oracle_event_link_rate, None);
        assert!(q.render_table().contains('-'));
    }

    #[test]
    fn orphan_summary_row_is_broken_reference() {
        let store = Store::in_memory();
        store
            .commit(vec![Entry::Summary(MarketDaySummary {
                market_id: h(99),
                day: NaiveDate::from_ymd_opt(2025, 10, 2).unwrap(),
                trade_count: 1,
                total_trade_value: 1.0,
                total_trade_value_base: 1_000_000,
                total_fee: 0.0,
                total_fee_base: 0,
                distinct_wallets: 2,
                last_price_yes: None,
            })])
            .unwrap();
        let q = compute_quality(&store);
        assert_eq!(q.broken_reference_count, 1);
    }

    #[test]
    fn quality_is_pure() {
        let store = Store::in_memory();
        store
            .commit(vec![Entry::Market(market(1)), Entry::Fill(linked_fill(9, 1))])
            .unwrap();
        assert_eq!(compute_quality(&store), compute_quality(&store));
    }

    #[test]
    fn per_event_type_rows_cover_main_states() {
        let store = Store::in_memory();
        let mut e = OracleEvent {
            tx_hash: h(1),
            log_index: 0,
            block_number: 1,
            timestamp: Utc.with_ymd_and_hms(2025, 10, 2, 0, 0, 0).unwrap(),
            event_type: polyflow_core::OracleEventType::Settle,
            requester: None,
            question_id: None,
            condition_id: Some(h(1)),
            market_id: Some(h(1)),
            source_contract: Address::from_bytes([1; 20]),
            actor: None,
            ancillary: None,
            proposed_price: None,
            settled_price: Some(1.0),
            meta: Default::default(),
        };
        e.meta
            .insert("resolved_path".to_string(), "direct".to_string());
        store
            .commit(vec![Entry::Market(market(1)), Entry::OracleEvent(e)])
            .unwrap();
        let q = compute_quality(&store);
        assert_eq!(q.per_event_type.len(), 4);
        let settle = q
            .per_event_type
            .iter()
            .find(|t| t.event_type == "settle")
            .unwrap();
        assert_eq!((settle.total, settle.linked), (1, 1));
        assert_eq!(settle.rate, Some(1.0));

        let stats = compute_bridge_stats(&store);
        assert_eq!(stats.by_path.get("direct"), Some(&1));
        assert_eq!(stats.overall_rate(), Some(1.0));
    }
}
