//! Oracle-risk dynamics: the risk anchor per market, continued betting
//! after the anchor, and post-anchor trading intensity.

use chrono::{DateTime, Duration, Utc};
use polyflow_core::{Hash32, OracleEvent, OracleEventType};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    FirstDispute,
    LastPropose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAnchor {
    pub market_id: Hash32,
    #[serde(with = "polyflow_core::time::iso_seconds")]
    pub anchor_time: DateTime<Utc>,
    pub anchor_kind: AnchorKind,
    pub continued_betting: bool,
    pub first_trade_delay_hours: Option<f64>,
}

/// The risk anchor of one market's oracle events: the first dispute
/// timestamp when a dispute exists, otherwise the last propose
/// timestamp. Markets with neither have no anchor.
pub fn oracle_risk_anchor(events: &[OracleEvent]) -> Option<(DateTime<Utc>, AnchorKind)> {
    let first_dispute = events
        .iter()
        .filter(|e| e.event_type == OracleEventType::Dispute)
        .map(|e| e.timestamp)
        .min();
    if let Some(t) = first_dispute {
        return Some((t, AnchorKind::FirstDispute));
    }
    events
        .iter()
        .filter(|e| e.event_type == OracleEventType::Propose)
        .map(|e| e.timestamp)
        .max()
        .map(|t| (t, AnchorKind::LastPropose))
}

/// Continued betting: at least one trade strictly after the anchor and
/// within the window. The delay is hours to the first such trade and is
/// absent when the flag is false.
pub fn continued_betting(
    fill_times: &[DateTime<Utc>],
    anchor: DateTime<Utc>,
    window: Duration,
) -> (bool, Option<f64>) {
    let first_in_window = fill_times
        .iter()
        .filter(|t| **t > anchor && **t <= anchor + window)
        .min();
    match first_in_window {
        Some(t) => {
            let hours = (*t - anchor).num_milliseconds() as f64 / 3_600_000.0;
            (true, Some(hours))
        }
        None => (false, None),
    }
}

pub const CONTINUED_BETTING_WINDOW_HOURS: i64 = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostAnchorStats {
    /// Trades per whole hour after the anchor: bucket h counts trades
    /// with delay in [h, h+1).
    pub hourly_trade_counts: Vec<(u32, u64)>,
    /// First-trade delays per hour bucket over resuming markets.
    pub first_trade_hist: Vec<(u32, u64)>,
    /// Cumulative share of all anchored markets that have resumed by
    /// the end of each hour bucket; tops out at resumed/total.
    pub cumulative_resumption: Vec<(u32, f64)>,
    pub markets_total: u64,
    pub markets_resumed: u64,
    /// Share of resuming markets with first trade inside 0-3h
    /// (delay < 3h).
    pub share_within_3h: Option<f64>,
    pub median_delay_hours: Option<f64>,
}

/// Post-anchor trading dynamics over a cohort of anchored markets. The
/// input pairs each market's anchor with its trade timestamps.
pub fn post_anchor_histogram(
    markets: &[(DateTime<Utc>, Vec<DateTime<Utc>>)],
) -> PostAnchorStats {
    let mut hourly: std::collections::BTreeMap<u32, u64> = Default::default();
    let mut delays: Vec<f64> = Vec::new();
    for (anchor, times) in markets {
        let mut first: Option<f64> = None;
        for t in times {
            if t <= anchor {
                continue;
            }
            let hours = (*t - *anchor).num_milliseconds() as f64 / 3_600_000.0;
            *hourly.entry(hours.floor() as u32).or_insert(0) += 1;
            first = Some(match first {
                Some(f) => f.min(hours),
                None => hours,
            });
        }
        if let Some(f) = first {
            delays.push(f);
        }
    }

    let total = markets.len() as u64;
    let resumed = delays.len() as u64;
    let mut first_hist: std::collections::BTreeMap<u32, u64> = Default::default();
    for d in &delays {
        *first_hist.entry(d.floor() as u32).or_insert(0) += 1;
    }
    let max_bucket = first_hist.keys().max().copied().unwrap_or(0);
    let mut cumulative = Vec::new();
    let mut acc = 0u64;
    for h in 0..=max_bucket {
        acc += first_hist.get(&h).copied().unwrap_or(0);
        if total > 0 {
            cumulative.push((h, acc as f64 / total as f64));
        }
    }

    let share_within_3h = if resumed > 0 {
        Some(delays.iter().filter(|d| **d < 3.0).count() as f64 / resumed as f64)
    } else {
        None
    };
    let median_delay_hours = if delays.is_empty() {
        None
    } else {
        let mut sorted = delays.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = sorted.len() / 2;
        Some(if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        })
    };

    PostAnchorStats {
        hourly_trade_counts: hourly.into_iter().collect(),
        first_trade_hist: first_hist.into_iter().collect(),
        cumulative_resumption: cumulative,
        markets_total: total,
        markets_resumed: resumed,
        share_within_3h,
        median_delay_hours,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use polyflow_core::Address;

    fn at(hour: u32, minute: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 1, 1, hour, minute, 0).unwrap()
    }

    fn event(ty: OracleEventType, hour: u32) -> OracleEvent {
        OracleEvent {
            tx_hash: Hash32::from_bytes([hour as u8; 32]),
            log_index: 0,
            block_number: hour as u64,
            timestamp: at(hour, 0),
            event_type: ty,
            requester: None,
            question_id: None,
            condition_id: None,
            market_id: None,
            source_contract: Address::ZERO,
            actor: None,
            ancillary: None,
            proposed_price: if ty == OracleEventType::Propose { Some(1.0) } else { None },
            settled_price: if ty == OracleEventType::Settle { Some(1.0) } else { None },
            meta: Default::default(),
        }
    }

    #[test]
    fn dispute_beats_propose() {
        let events = vec![
            event(OracleEventType::Propose, 1),
            event(OracleEventType::Dispute, 2),
        ];
        let (t, kind) = oracle_risk_anchor(&events).unwrap();
        assert_eq!(kind, AnchorKind::FirstDispute);
        assert_eq!(t, at(2, 0));
    }

    #[test]
    fn last_propose_without_dispute() {
        let events = vec![
            event(OracleEventType::Propose, 1),
            event(OracleEventType::Propose, 3),
        ];
        let (t, kind) = oracle_risk_anchor(&events).unwrap();
        assert_eq!(kind, AnchorKind::LastPropose);
        assert_eq!(t, at(3, 0));
    }

    #[test]
    fn request_only_has_no_anchor() {
        assert!(oracle_risk_anchor(&[event(OracleEventType::Request, 1)]).is_none());
    }

    #[test]
    fn continued_betting_window() {
        let anchor = at(1, 0);
        let window = Duration::hours(24);
        // fill at anchor + 1h
        let (flag, delay) = continued_betting(&[at(2, 0)], anchor, window);
        assert!(flag);
        assert_eq!(delay, Some(1.0));
        // no fills after anchor
        let (flag, delay) = continued_betting(&[at(0, 30)], anchor, window);
        assert!(!flag);
        assert_eq!(delay, None);
        // fill at anchor + 25h only: outside the window
        let anchor = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
        let late = anchor + Duration::hours(25);
        let (flag, delay) = continued_betting(&[late], anchor, window);
        assert!(!flag);
        assert_eq!(delay, None);
        // boundary: exactly +24h counts
        let edge = anchor + Duration::hours(24);
        let (flag, _) = continued_betting(&[edge], anchor, window);
        assert!(flag);
    }

    #[test]
    fn histogram_cumulative_tops_at_resumed_share() {
        let anchor = at(0, 0);
        let markets = vec![
            (anchor, vec![at(1, 30)]),       // resumes at 1.5h
            (anchor, vec![at(2, 15)]),       // resumes at 2.25h
            (anchor, vec![]),                // never resumes
        ];
        let stats = post_anchor_histogram(&markets);
        assert_eq!(stats.markets_total, 3);
        assert_eq!(stats.markets_resumed, 2);
        let last = stats.cumulative_resumption.last().unwrap();
        assert!((last.1 - 2.0 / 3.0).abs() < 1e-12);
        // monotone
        for w in stats.cumulative_resumption.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
        assert_eq!(stats.share_within_3h, Some(1.0));
    }

    #[test]
    fn all_first_trades_in_hour_zero() {
        let anchor = at(0, 0);
        let markets = vec![
            (anchor, vec![at(0, 10)]),
            (anchor, vec![at(0, 50)]),
        ];
        let stats = post_anchor_histogram(&markets);
        assert_eq!(stats.first_trade_hist, vec![(0, 2)]);
        assert_eq!(stats.share_within_3h, Some(1.0));
        assert_eq!(stats.cumulative_resumption, vec![(0, 1.0)]);
    }

    #[test]
    fn hourly_intensity_counts_every_trade() {
        let anchor = at(0, 0);
        let markets = vec![(anchor, vec![at(0, 10), at(0, 40), at(5, 0)])];
        let stats = post_anchor_histogram(&markets);
        assert_eq!(stats.hourly_trade_counts, vec![(0, 2), (5, 1)]);
    }
}
