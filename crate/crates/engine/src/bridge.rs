//! Bridge layer: cross-source identifier resolution. Maps traded tokens
//! to condition ids and oracle events to canonical markets through
//! several independent paths, with deterministic conflict handling.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use polyflow_core::{Hash32, OracleEvent, TokenId};

/// Where a token mapping came from. When two sources claim the same
/// token for different conditions, the higher-priority source wins
/// regardless of arrival order; at equal priority the first writer wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeSource {
    ApiClobIds,
    ApiTokenFields,
    OnchainRegistration,
}

impl BridgeSource {
    pub fn priority(self) -> u8 {
        match self {
            Self::ApiClobIds => 2,
            Self::ApiTokenFields => 1,
            Self::OnchainRegistration => 0,
        }
    }
}

/// One token-to-condition mapping of the bridge relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBridgeEntry {
    pub asset_id: TokenId,
    pub condition_id: Hash32,
    pub source: BridgeSource,
}

/// Outcome of one bridge insert.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    /// New mapping stored.
    Inserted,
    /// Identical mapping already present (or a lower-priority duplicate).
    Duplicate,
    /// Same token already mapped to a different condition. The kept
    /// mapping is returned; the conflict is surfaced to quality reports.
    Conflict { kept: Hash32, rejected: Hash32 },
}

/// Resolution path that linked an oracle event, for quality accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionPath {
    Direct,
    Adapter,
    Negrisk,
}

impl ResolutionPath {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Adapter => "adapter",
            Self::Negrisk => "negrisk",
        }
    }
}

/// Which resolution paths are enabled. Defaults to all; subsets exist
/// for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgePaths {
    pub direct: bool,
    pub adapter: bool,
    pub negrisk: bool,
}

impl Default for BridgePaths {
    fn default() -> Self {
        Self {
            direct: true,
            adapter: true,
            negrisk: true,
        }
    }
}

impl BridgePaths {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn direct_only() -> Self {
        Self {
            direct: true,
            adapter: false,
            negrisk: false,
        }
    }

    /// True when every path enabled in `self` is also enabled in `other`.
    pub fn subset_of(&self, other: &BridgePaths) -> bool {
        (!self.direct || other.direct)
            && (!self.adapter || other.adapter)
            && (!self.negrisk || other.negrisk)
    }
}

/// Meta key under which negative-risk lifecycle events carry their
/// request identifier.
pub const NEGRISK_REQUEST_META_KEY: &str = "negrisk_request_id";

/// Read view over the bridge maps needed to resolve an oracle event.
/// The storage layer owns the maps; this borrows them for one pass.
pub struct OracleBridgeView<'a> {
    pub question_to_condition: &'a BTreeMap<Hash32, Hash32>,
    pub negrisk_to_question: &'a BTreeMap<String, Hash32>,
}

impl<'a> OracleBridgeView<'a> {
    /// Resolves an oracle event to its market, trying paths in fixed
    /// order: direct condition id, then the adapter-initialization map,
    /// then the negative-risk request mapping. `market_exists` is the
    /// membership test against the canonical market relation.
    pub fn resolve(
        &self,
        event: &OracleEvent,
        paths: BridgePaths,
        market_exists: impl Fn(&Hash32) -> bool,
    ) -> Option<(Hash32, ResolutionPath)> {
        if paths.direct {
            if let Some(c) = event.condition_id {
                if market_exists(&c) {
                    return Some((c, ResolutionPath::Direct));
                }
            }
        }
        if paths.adapter {
            if let Some(q) = event.question_id {
                if let Some(c) = self.question_to_condition.get(&q) {
                    if market_exists(c) {
                        return Some((*c, ResolutionPath::Adapter));
                    }
                }
            }
        }
        if paths.negrisk {
            if let Some(req) = event.meta.get(NEGRISK_REQUEST_META_KEY) {
                if let Some(q) = self.negrisk_to_question.get(req) {
                    if let Some(c) = self.question_to_condition.get(q) {
                        if market_exists(c) {
                            return Some((*c, ResolutionPath::Negrisk));
                        }
                    }
                }
            }
        }
        None
    }
}

/// Applies the source-priority conflict rule to a token-bridge map.
/// Returns what happened so callers can count entries and conflicts.
pub fn bridge_insert(
    map: &mut BTreeMap<TokenId, (Hash32, BridgeSource)>,
    token: TokenId,
    condition: Hash32,
    source: BridgeSource,
) -> InsertOutcome {
    match map.get(&token) {
        None => {
            map.insert(token, (condition, source));
            InsertOutcome::Inserted
        }
        Some((existing_cond, existing_src)) => {
            if *existing_cond == condition {
                // same mapping; upgrade the recorded source if stronger
                if source.priority() > existing_src.priority() {
                    map.insert(token, (condition, source));
                }
                InsertOutcome::Duplicate
            } else if source.priority() > existing_src.priority() {
                let rejected = *existing_cond;
                map.insert(token, (condition, source));
                InsertOutcome::Conflict {
                    kept: condition,
                    rejected,
                }
            } else {
                InsertOutcome::Conflict {
                    kept: *existing_cond,
                    rejected: condition,
                }
            }
        }
    }
}

/// Per-path linkage counters over the stored oracle relation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BridgeStats {
    pub total_events: u64,
    pub linked_events: u64,
    pub by_path: BTreeMap<String, u64>,
    pub by_event_type: BTreeMap<String, (u64, u64)>,
}

impl BridgeStats {
    pub fn overall_rate(&self) -> Option<f64> {
        if self.total_events == 0 {
            None
        } else {
            Some(self.linked_events as f64 / self.total_events as f64)
        }
    }

    pub fn rate_for(&self, event_type: &str) -> Option<f64> {
        self.by_event_type
            .get(event_type)
            .and_then(|(total, linked)| {
                if *total == 0 {
                    None
                } else {
                    Some(*linked as f64 / *total as f64)
                }
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use polyflow_core::{Address, OracleEventType};
    use chrono::{TimeZone, Utc};

    fn h(n: u8) -> Hash32 {
        Hash32::from_bytes([n; 32])
    }

    fn t(s: &str) -> TokenId {
        TokenId::from(s)
    }

    #[test]
    fn insert_priority_and_conflicts() {
        let mut map = BTreeMap::new();
        assert_eq!(
            bridge_insert(&mut map, t("a"), h(1), BridgeSource::OnchainRegistration),
            InsertOutcome::Inserted
        );
        // identical mapping is a duplicate, not a conflict
        assert_eq!(
            bridge_insert(&mut map, t("a"), h(1), BridgeSource::OnchainRegistration),
            InsertOutcome::Duplicate
        );
        // conflicting mapping from a stronger source replaces
        assert_eq!(
            bridge_insert(&mut map, t("a"), h(2), BridgeSource::ApiClobIds),
            InsertOutcome::Conflict {
                kept: h(2),
                rejected: h(1)
            }
        );
        // conflicting mapping from a weaker source is rejected
        assert_eq!(
            bridge_insert(&mut map, t("a"), h(3), BridgeSource::ApiTokenFields),
            InsertOutcome::Conflict {
                kept: h(2),
                rejected: h(3)
            }
        );
        assert_eq!(map.get(&t("a")).unwrap().0, h(2));
    }

    #[test]
    fn insert_order_does_not_change_outcome() {
        // priority rule makes the final map independent of arrival order
        let inserts = [
            (t("x"), h(1), BridgeSource::OnchainRegistration),
            (t("x"), h(2), BridgeSource::ApiClobIds),
            (t("x"), h(3), BridgeSource::ApiTokenFields),
        ];
        let mut forward = BTreeMap::new();
        for (tok, c, s) in inserts.clone() {
            bridge_insert(&mut forward, tok, c, s);
        }
        let mut reverse = BTreeMap::new();
        for (tok, c, s) in inserts.into_iter().rev() {
            bridge_insert(&mut reverse, tok, c, s);
        }
        assert_eq!(forward.get(&t("x")).unwrap().0, h(2));
        assert_eq!(reverse.get(&t("x")).unwrap().0, h(2));
    }

    fn event(
        condition: Option<Hash32>,
        question: Option<Hash32>,
        negrisk: Option<&str>,
    ) -> OracleEvent {
        let mut meta = BTreeMap::new();
        if let Some(id) = negrisk {
            meta.insert(NEGRISK_REQUEST_META_KEY.to_string(), id.to_string());
        }
        OracleEvent {
            tx_hash: h(9),
            log_index: 0,
            block_number: 1,
            timestamp: Utc.with_ymd_and_hms(2025, 10, 1, 0, 0, 0).unwrap(),
            event_type: OracleEventType::Settle,
            requester: None,
            question_id: question,
            condition_id: condition,
            market_id: None,
            source_contract: Address::from_bytes([1; 20]),
            actor: None,
            ancillary: None,
            proposed_price: None,
            settled_price: Some(1.0),
            meta,
        }
    }

    #[test]
    fn resolution_path_order() {
        let mut q2c = BTreeMap::new();
        q2c.insert(h(10), h(1));
        let mut n2q = BTreeMap::new();
        n2q.insert("nr-1".to_string(), h(10));
        let view = OracleBridgeView {
            question_to_condition: &q2c,
            negrisk_to_question: &n2q,
        };
        let known = |c: &Hash32| *c == h(1) || *c == h(2);

        // direct wins when present
        let e = event(Some(h(2)), Some(h(10)), Some("nr-1"));
        assert_eq!(
            view.resolve(&e, BridgePaths::all(), known),
            Some((h(2), ResolutionPath::Direct))
        );
        // adapter path when no direct id
        let e = event(None, Some(h(10)), None);
        assert_eq!(
            view.resolve(&e, BridgePaths::all(), known),
            Some((h(1), ResolutionPath::Adapter))
        );
        // negrisk chain: request id -> question -> condition
        let e = event(None, None, Some("nr-1"));
        assert_eq!(
            view.resolve(&e, BridgePaths::all(), known),
            Some((h(1), ResolutionPath::Negrisk))
        );
        // unknown identifiers stay unlinked
        let e = event(None, Some(h(42)), None);
        assert_eq!(view.resolve(&e, BridgePaths::all(), known), None);
        // disabled paths are skipped
        let e = event(None, Some(h(10)), Some("nr-1"));
        assert_eq!(view.resolve(&e, BridgePaths::direct_only(), known), None);
    }
}
