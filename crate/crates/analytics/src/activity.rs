//! Platform activity series: daily transactions / active wallets /
//! traded markets, and rolling trading volume by primary topic.

use chrono::NaiveDate;
use polyflow_core::{Address, FillRecord, Hash32};
use polyflow_engine::MarketDaySummary;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayActivity {
    pub day: NaiveDate,
    pub transactions: u64,
    pub active_wallets: u64,
    pub traded_markets: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedDayActivity {
    pub day: NaiveDate,
    pub transactions: f64,
    pub active_wallets: f64,
    pub traded_markets: f64,
}

/// Per-day activity over fills, with min-max (divide-by-max) normalized
/// variants. Wallet counts are distinct maker∪taker across the whole
/// day, so they come from fills rather than per-market summary rows.
pub fn daily_activity(
    fills: &[FillRecord],
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
) -> (Vec<DayActivity>, Vec<NormalizedDayActivity>) {
    struct Acc {
        transactions: u64,
        wallets: BTreeSet<Address>,
        markets: BTreeSet<Hash32>,
    }
    let mut days: BTreeMap<NaiveDate, Acc> = BTreeMap::new();
    for f in fills {
        let day = f.meta.timestamp.date_naive();
        if from.is_some_and(|d| day < d) || to.is_some_and(|d| day > d) {
            continue;
        }
        let acc = days.entry(day).or_insert_with(|| Acc {
            transactions: 0,
            wallets: BTreeSet::new(),
            markets: BTreeSet::new(),
        });
        acc.transactions += 1;
        acc.wallets.insert(f.maker);
        acc.wallets.insert(f.taker);
        if let Some(m) = f.market_id {
            acc.markets.insert(m);
        }
    }
    let series: Vec<DayActivity> = days
        .into_iter()
        .map(|(day, acc)| DayActivity {
            day,
            transactions: acc.transactions,
            active_wallets: acc.wallets.len() as u64,
            traded_markets: acc.markets.len() as u64,
        })
        .collect();

    let max_tx = series.iter().map(|d| d.transactions).max().unwrap_or(0);
    let max_w = series.iter().map(|d| d.active_wallets).max().unwrap_or(0);
    let max_m = series.iter().map(|d| d.traded_markets).max().unwrap_or(0);
    let norm = |v: u64, max: u64| if max == 0 { 0.0 } else { v as f64 / max as f64 };
    let normalized = series
        .iter()
        .map(|d| NormalizedDayActivity {
            day: d.day,
            transactions: norm(d.transactions, max_tx),
            active_wallets: norm(d.active_wallets, max_w),
            traded_markets: norm(d.traded_markets, max_m),
        })
        .collect();
    (series, normalized)
}

/// First topic from the configured priority list matching any market
/// tag (case-insensitive); everything else groups under "Other".
pub fn primary_topic(tags: &[String], priority: &[String]) -> String {
    for topic in priority {
        let lowered = topic.to_lowercase();
        if tags.iter().any(|t| t.to_lowercase() == lowered) {
            return topic.clone();
        }
    }
    "Other".to_string()
}

pub fn default_topic_priority() -> Vec<String> {
    ["Sports", "Crypto", "Politics", "Games", "Science", "Culture", "Economics"]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicVolumeRow {
    pub topic: String,
    pub day: NaiveDate,
    pub rolling_mean_value: f64,
}

/// Trailing-inclusive rolling mean of daily trade value per topic.
/// Days without data contribute zero to the window.
pub fn rolling_volume_by_topic(
    summaries: &[MarketDaySummary],
    market_topics: &BTreeMap<Hash32, String>,
    window_days: u32,
) -> Vec<TopicVolumeRow> {
    assert!(window_days >= 1, "window must be at least one day");
    let mut daily: BTreeMap<(String, NaiveDate), f64> = BTreeMap::new();
    let mut all_days: BTreeSet<NaiveDate> = BTreeSet::new();
    let mut topics: BTreeSet<String> = BTreeSet::new();
    for s in summaries {
        let topic = market_topics
            .get(&s.market_id)
            .cloned()
            .unwrap_or_else(|| "Other".to_string());
        *daily.entry((topic.clone(), s.day)).or_insert(0.0) += s.total_trade_value;
        all_days.insert(s.day);
        topics.insert(topic);
    }
    let (Some(&first), Some(&last)) = (all_days.first(), all_days.last()) else {
        return Vec::new();
    };

    let mut out = Vec::new();
    for topic in &topics {
        let mut day = first;
        let mut window: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
        while day <= last {
            let v = daily.get(&(topic.clone(), day)).copied().unwrap_or(0.0);
            window.push_back(v);
            if window.len() > window_days as usize {
                window.pop_front();
            }
            out.push(TopicVolumeRow {
                topic: topic.clone(),
                day,
                rolling_mean_value: window.iter().sum::<f64>() / window_days as f64,
            });
            day = day.succ_opt().expect("date within range");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use polyflow_core::{FillMeta, Side, SourceContract, TokenId};

    fn h(n: u8) -> Hash32 {
        Hash32::from_bytes([n; 32])
    }

    fn fill(day: u32, tx: u8, maker: u8, taker: u8, market: Option<u8>) -> FillRecord {
        FillRecord {
            tx_hash: h(tx),
            log_index: tx as u64,
            block_number: 1,
            maker: Address::from_bytes([maker; 20]),
            taker: Address::from_bytes([taker; 20]),
            asset_id: TokenId::from("1"),
            maker_amount: 10,
            taker_amount: 5,
            fee: 0,
            size: 0.0,
            price: 0.0,
            market_id: market.map(h),
            meta: FillMeta {
                source_contract: SourceContract::CtfExchange,
                timestamp: Utc.with_ymd_and_hms(2025, 10, day, 1, 0, 0).unwrap(),
                side: Side::Buy,
            },
        }
        .with_derived_decimals()
        .unwrap()
    }

    #[test]
    fn single_day_counts() {
        // 5 fills, 3 wallets, 2 markets
        let fills = vec![
            fill(1, 1, 1, 2, Some(1)),
            fill(1, 2, 1, 2, Some(1)),
            fill(1, 3, 2, 3, Some(2)),
            fill(1, 4, 1, 3, Some(2)),
            fill(1, 5, 2, 1, Some(1)),
        ];
        let (series, norm) = daily_activity(&fills, None, None);
        assert_eq!(series.len(), 1);
        assert_eq!(
            (series[0].transactions, series[0].active_wallets, series[0].traded_markets),
            (5, 3, 2)
        );
        assert_eq!(
            (norm[0].transactions, norm[0].active_wallets, norm[0].traded_markets),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn empty_range_is_empty() {
        let fills = vec![fill(1, 1, 1, 2, Some(1))];
        let (series, norm) = daily_activity(
            &fills,
            Some(NaiveDate::from_ymd_opt(2025, 11, 1).unwrap()),
            None,
        );
        assert!(series.is_empty());
        assert!(norm.is_empty());
    }

    #[test]
    fn normalization_divides_by_max() {
        let mut fills: Vec<FillRecord> = (0..10).map(|i| fill(1, i, 1, 2, Some(1))).collect();
        fills.extend((10..15).map(|i| fill(2, i, 1, 2, Some(1))));
        let (_, norm) = daily_activity(&fills, None, None);
        assert_eq!(norm[0].transactions, 1.0);
        assert_eq!(norm[1].transactions, 0.5);
    }

    fn summary(market: u8, day: u32, value: f64) -> MarketDaySummary {
        MarketDaySummary {
            market_id: h(market),
            day: NaiveDate::from_ymd_opt(2025, 10, day).unwrap(),
            trade_count: 1,
            total_trade_value: value,
            total_trade_value_base: (value * 1e6) as u64,
            total_fee: 0.0,
            total_fee_base: 0,
            distinct_wallets: 2,
            last_price_yes: None,
        }
    }

    #[test]
    fn rolling_constant_series() {
        let topics: BTreeMap<Hash32, String> = [(h(1), "Sports".to_string())].into();
        let summaries: Vec<MarketDaySummary> = (1..=10).map(|d| summary(1, d, 7.0)).collect();
        let rows = rolling_volume_by_topic(&summaries, &topics, 1);
        assert!(rows.iter().all(|r| (r.rolling_mean_value - 7.0).abs() < 1e-12));
    }

    #[test]
    fn rolling_volume_spike_decays_over_window() {
        let topics: BTreeMap<Hash32, String> = [(h(1), "Sports".to_string())].into();
        // volume only on day 1; pad the range to 30 days with an empty
        // far-away summary of another topic
        let mut summaries = vec![summary(1, 1, 30.0)];
        summaries.push(summary(2, 30, 0.0));
        let rows = rolling_volume_by_topic(&summaries, &topics, 30);
        let sports: Vec<&TopicVolumeRow> =
            rows.iter().filter(|r| r.topic == "Sports").collect();
        // day 30 window holds the single day-1 observation: 30/30 = 1
        assert!((sports[29].rolling_mean_value - 1.0).abs() < 1e-12);
        assert_eq!(sports[0].rolling_mean_value, 1.0); // 30/30 on day 1
    }

    #[test]
    fn unknown_topics_group_under_other() {
        let topics = BTreeMap::new();
        let rows = rolling_volume_by_topic(&[summary(9, 1, 5.0)], &topics, 1);
        assert!(rows.iter().all(|r| r.topic == "Other"));
    }

    #[test]
    fn primary_topic_priority_order() {
        let priority = default_topic_priority();
        assert_eq!(
            primary_topic(&["nba".into(), "sports".into()], &priority),
            "Sports"
        );
        assert_eq!(
            primary_topic(&["crypto".into(), "sports".into()], &priority),
            "Sports",
            "priority order wins over tag order"
        );
        assert_eq!(primary_topic(&["weather".into()], &priority), "Other");
        assert_eq!(primary_topic(&[], &priority), "Other");
    }
}
