//! The synchronization engine: per-layer polling with checkpoints,
//! duplicate-safe writes, retry-based market association, timestamp
//! caching, and on-chain market recovery.
//!
//! Each cycle runs the layers in market → fill → oracle order, then a
//! maintenance pass (retry queue, opportunistic oracle re-linking).
//! Every layer commits its batch and its advanced cursor in one atomic
//! store commit, so an interruption at any point resumes without loss
//! or duplication.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;
use thiserror::Error;

use polyflow_core::ndjson;
use polyflow_core::{
    validate_market, Address, FillRecord, Hash32, MarketMetadata, MarketRecord, OracleEvent,
    OracleEventType, Provenance, TokenId, TokenRegistration,
};

use crate::bridge::{
    bridge_insert, BridgePaths, BridgeSource, InsertOutcome, OracleBridgeView, ResolutionPath,
    TokenBridgeEntry, NEGRISK_REQUEST_META_KEY,
};
use crate::source::{DataSource, Layer, Quarantined, SourceCursor, SourceError};
use crate::store::{ConflictRecord, Entry, Store, StoreError};

pub use crate::store::{RetryQueueEntry, SyncState};

pub const RESOLVED_PATH_META_KEY: &str = "resolved_path";
pub const NONSTANDARD_SETTLE_META_KEY: &str = "nonstandard_settle";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Storage(#[from] StoreError),
}

#[derive(Debug, Error)]
pub enum RecoveryError {
    /// The asset was never registered on chain; it stays in the retry
    /// queue.
    #[error("token {0} not found in on-chain registrations")]
    NotFound(TokenId),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Feature switches for the ablation mechanisms. Everything defaults on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineToggles {
    pub onchain_recovery: bool,
    pub retry: bool,
    pub timestamp_cache: bool,
    pub bridge_paths: BridgePaths,
}

impl Default for EngineToggles {
    fn default() -> Self {
        Self {
            onchain_recovery: true,
            retry: true,
            timestamp_cache: true,
            bridge_paths: BridgePaths::all(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyncOptions {
    pub toggles: EngineToggles,
    pub retry_max_attempts: u32,
    pub confirmation_depth: u64,
    /// Upper bound on blocks scanned per cycle for the chain layers;
    /// `None` scans to the head in one cycle.
    pub max_blocks_per_cycle: Option<u64>,
    /// Oracle address stamped onto recovered market records
    /// (registration events do not carry one).
    pub default_oracle_address: Address,
    /// Quarantine log destination; in-memory only when `None`.
    pub quarantine_path: Option<PathBuf>,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self {
            toggles: EngineToggles::default(),
            retry_max_attempts: 10,
            confirmation_depth: 0,
            max_blocks_per_cycle: None,
            default_oracle_address: Address::ZERO,
            quarantine_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounts {
    pub ingested: u64,
    pub duplicates: u64,
    pub quarantined: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: u64,
    pub head_block: u64,
    pub registration: LayerCounts,
    pub market: LayerCounts,
    pub fill: LayerCounts,
    pub fill_resolved: u64,
    pub fill_unresolved: u64,
    pub oracle: LayerCounts,
    pub oracle_linked: u64,
    pub oracle_unlinked: u64,
    pub retry_attempted: u64,
    pub retry_resolved: u64,
    pub retry_exhausted: u64,
    pub recovered_markets: u64,
    pub relinked_oracle: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FillIngestReport {
    pub inserted: u64,
    pub duplicates: u64,
    pub quarantined: u64,
    pub resolved: u64,
    pub unresolved: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleIngestReport {
    pub inserted: u64,
    pub duplicates: u64,
    pub quarantined: u64,
    pub linked: u64,
    pub unlinked: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RetryReport {
    pub attempted: u64,
    pub resolved: u64,
    pub newly_exhausted: u64,
    pub recovered: u64,
}

pub struct SyncEngine {
    source: Arc<dyn DataSource>,
    store: Arc<Store>,
    options: SyncOptions,
    cache_hits: u64,
    cache_misses: u64,
    quarantine: Vec<Quarantined>,
    quarantine_file: Option<BufWriter<File>>,
}

impl SyncEngine {
    pub fn new(
        source: Arc<dyn DataSource>,
        store: Arc<Store>,
        options: SyncOptions,
    ) -> Result<Self, EngineError> {
        let quarantine_file = match &options.quarantine_path {
            Some(path) => {
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(StoreError::from)?;
                }
                Some(BufWriter::new(
                    OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(path)
                        .map_err(StoreError::from)?,
                ))
            }
            None => None,
        };
        Ok(Self {
            source,
            store,
            options,
            cache_hits: 0,
            cache_misses: 0,
            quarantine: Vec::new(),
            quarantine_file,
        })
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn toggles(&self) -> &EngineToggles {
        &self.options.toggles
    }

    pub fn quarantined(&self) -> &[Quarantined] {
        &self.quarantine
    }

    /// (hits, misses) of the timestamp cache in this process.
    pub fn cache_counters(&self) -> (u64, u64) {
        (self.cache_hits, self.cache_misses)
    }

    fn log_quarantine(&mut self, items: Vec<Quarantined>) {
        if items.is_empty() {
            return;
        }
        if let Some(w) = self.quarantine_file.as_mut() {
            for q in &items {
                let _ = w.write_all(ndjson::to_line(q).as_bytes());
                let _ = w.write_all(b"\n");
            }
            let _ = w.flush();
        }
        self.quarantine.extend(items);
    }

    // ------------------------------------------------------------------
    // timestamp cache
    // ------------------------------------------------------------------

    /// Resolves block timestamps, serving hits from the cache relation
    /// and fetching each missing block from the source exactly once.
    /// With the cache toggle off every block goes to the source.
    pub fn timestamps_for(
        &mut self,
        blocks: &BTreeSet<u64>,
    ) -> Result<BTreeMap<u64, DateTime<Utc>>, EngineError> {
        let mut out = BTreeMap::new();
        let mut new_entries = Vec::new();
        for &block in blocks {
            if self.options.toggles.timestamp_cache {
                if let Some(ts) = self.store.block_timestamp_cached(block) {
                    self.cache_hits += 1;
                    out.insert(block, ts);
                    continue;
                }
            }
            let ts = self.source.block_timestamp(block)?;
            self.cache_misses += 1;
            if self.options.toggles.timestamp_cache {
                new_entries.push(Entry::BlockTimestamp {
                    block,
                    timestamp: ts,
                });
            }
            out.insert(block, ts);
        }
        self.store.commit(new_entries)?;
        Ok(out)
    }

    // ------------------------------------------------------------------
    // token bridge
    // ------------------------------------------------------------------

    /// Stages bridge entries for a market's tokens, honoring source
    /// priority. Returns the number of new entries.
    fn stage_market_tokens(
        &self,
        market: &MarketRecord,
        staged: &mut BTreeMap<TokenId, (Hash32, BridgeSource)>,
        entries: &mut Vec<Entry>,
    ) -> u64 {
        let mut inserts: Vec<(TokenId, BridgeSource)> = Vec::new();
        match market.provenance {
            Provenance::Api => {
                if let Some(clob) = &market.clob_token_ids {
                    for t in clob {
                        inserts.push((t.clone(), BridgeSource::ApiClobIds));
                    }
                }
                for t in [&market.yes_token, &market.no_token] {
                    if !t.is_empty() {
                        inserts.push((t.clone(), BridgeSource::ApiTokenFields));
                    }
                }
            }
            Provenance::OnchainRecovered => {
                for t in [&market.yes_token, &market.no_token] {
                    if !t.is_empty() {
                        inserts.push((t.clone(), BridgeSource::OnchainRegistration));
                    }
                }
            }
        }
        let mut new_entries = 0;
        for (token, source) in inserts {
            match bridge_insert(staged, token.clone(), market.condition_id, source) {
                InsertOutcome::Inserted => {
                    new_entries += 1;
                    entries.push(Entry::TokenBridge(TokenBridgeEntry {
                        asset_id: token,
                        condition_id: market.condition_id,
                        source,
                    }));
                }
                InsertOutcome::Duplicate => {}
                InsertOutcome::Conflict { kept, rejected } => {
                    if kept == market.condition_id {
                        // stronger source replaced the mapping
                        entries.push(Entry::TokenBridge(TokenBridgeEntry {
                            asset_id: token.clone(),
                            condition_id: market.condition_id,
                            source,
                        }));
                        entries.push(Entry::Conflict(ConflictRecord {
                            asset_id: token,
                            kept_condition: kept,
                            rejected_condition: rejected,
                            rejected_source: source,
                        }));
                    } else {
                        entries.push(Entry::Conflict(ConflictRecord {
                            asset_id: token,
                            kept_condition: kept,
                            rejected_condition: rejected,
                            rejected_source: source,
                        }));
                    }
                }
            }
        }
        new_entries
    }

    /// Inserts token-to-condition mappings for one market. Idempotent;
    /// conflicting claims keep the higher-priority mapping and are
    /// surfaced through the quality report.
    pub fn register_market_tokens(&mut self, market: &MarketRecord) -> Result<u64, EngineError> {
        let mut staged = self.store.read().token_bridge.clone();
        let mut entries = Vec::new();
        let count = self.stage_market_tokens(market, &mut staged, &mut entries);
        self.store.commit(entries)?;
        Ok(count)
    }

    // ------------------------------------------------------------------
    // market layer
    // ------------------------------------------------------------------

    fn stage_registrations(
        &mut self,
        scan: Vec<TokenRegistration>,
        quarantined: Vec<Quarantined>,
    ) -> (Vec<Entry>, LayerCounts) {
        let mut counts = LayerCounts {
            quarantined: quarantined.len() as u64,
            ..Default::default()
        };
        self.log_quarantine(quarantined);
        let mut entries = Vec::new();
        let mut seen: BTreeSet<(Hash32, u64)> = BTreeSet::new();
        for reg in scan {
            let key = reg.key();
            if self.store.has_registration(&key) || !seen.insert(key) {
                counts.duplicates += 1;
                continue;
            }
            counts.ingested += 1;
            entries.push(Entry::Registration(reg));
        }
        (entries, counts)
    }

    fn stage_markets(
        &mut self,
        records: Vec<MarketRecord>,
        start_ordinal: u64,
        quarantined: Vec<Quarantined>,
    ) -> (Vec<Entry>, LayerCounts) {
        let mut counts = LayerCounts {
            quarantined: quarantined.len() as u64,
            ..Default::default()
        };
        self.log_quarantine(quarantined);
        let mut entries = Vec::new();
        let mut staged_bridge = self.store.read().token_bridge.clone();
        let mut staged_markets: BTreeSet<Hash32> = BTreeSet::new();
        let mut local_quarantine = Vec::new();
        for (idx, record) in records.into_iter().enumerate() {
            let position = start_ordinal + idx as u64 + 1;
            let violations = validate_market(&record);
            if !violations.is_empty() {
                counts.quarantined += 1;
                local_quarantine.push(Quarantined {
                    layer: Layer::Market,
                    position,
                    reason: violations
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                });
                continue;
            }
            let existing = self.store.get_market(&record.condition_id);
            let is_new = existing.is_none() && !staged_markets.contains(&record.condition_id);
            let upgrades = matches!(
                &existing,
                Some(m) if m.provenance == Provenance::OnchainRecovered
                    && record.provenance == Provenance::Api
            );
            if is_new || upgrades {
                counts.ingested += 1;
                staged_markets.insert(record.condition_id);
                self.stage_market_tokens(&record, &mut staged_bridge, &mut entries);
                entries.push(Entry::Market(record));
            } else {
                counts.duplicates += 1;
            }
        }
        self.log_quarantine(local_quarantine);
        (entries, counts)
    }

    /// Ingests a metadata batch outside the cycle loop (fixture replays,
    /// tests). Duplicate condition ids are skipped, recovered records
    /// are upgraded in place by their API counterparts.
    pub fn ingest_markets(&mut self, records: Vec<MarketRecord>) -> Result<LayerCounts, EngineError> {
        let (entries, counts) = self.stage_markets(records, 0, Vec::new());
        self.store.commit(entries)?;
        Ok(counts)
    }

    // ------------------------------------------------------------------
    // fill layer
    // ------------------------------------------------------------------

    fn stage_fills(
        &mut self,
        batch: Vec<FillRecord>,
        quarantined: Vec<Quarantined>,
    ) -> Result<(Vec<Entry>, FillIngestReport, Option<DateTime<Utc>>), EngineError> {
        let mut report = FillIngestReport {
            quarantined: quarantined.len() as u64,
            ..Default::default()
        };
        self.log_quarantine(quarantined);

        // pre-validate and dedup, collecting the blocks that need
        // timestamps before building entries
        let mut seen: BTreeSet<(Hash32, u64)> = BTreeSet::new();
        let mut accepted: Vec<FillRecord> = Vec::new();
        let mut local_quarantine = Vec::new();
        for fill in batch {
            let key = fill.key();
            if self.store.has_fill(&key) || !seen.insert(key) {
                report.duplicates += 1;
                continue;
            }
            if fill.maker_amount == 0 || fill.taker_amount == 0 {
                report.quarantined += 1;
                local_quarantine.push(Quarantined {
                    layer: Layer::Fill,
                    position: fill.block_number,
                    reason: format!("zero amount in fill {}:{}", fill.tx_hash, fill.log_index),
                });
                continue;
            }
            let price = fill
                .recomputed_price()
                .expect("amounts checked nonzero above");
            if !(0.0..=1.0).contains(&price) {
                report.quarantined += 1;
                local_quarantine.push(Quarantined {
                    layer: Layer::Fill,
                    position: fill.block_number,
                    reason: format!(
                        "price {price} outside [0,1] in fill {}:{}",
                        fill.tx_hash, fill.log_index
                    ),
                });
                continue;
            }
            accepted.push(fill);
        }
        self.log_quarantine(local_quarantine);

        let blocks: BTreeSet<u64> = accepted.iter().map(|f| f.block_number).collect();
        let timestamps = self.timestamps_for(&blocks)?;

        let mut entries = Vec::new();
        let mut staged_retry: BTreeMap<TokenId, RetryQueueEntry> = BTreeMap::new();
        let mut max_ts: Option<DateTime<Utc>> = None;
        for mut fill in accepted {
            fill.meta.timestamp = timestamps[&fill.block_number];
            max_ts = Some(max_ts.map_or(fill.meta.timestamp, |m: DateTime<Utc>| {
                m.max(fill.meta.timestamp)
            }));
            match self.store.resolve_token(&fill.asset_id) {
                Some(condition) => {
                    fill.market_id = Some(condition);
                    report.resolved += 1;
                }
                None => {
                    fill.market_id = None;
                    report.unresolved += 1;
                    let entry = staged_retry
                        .entry(fill.asset_id.clone())
                        .or_insert_with(|| {
                            self.store
                                .read()
                                .retry_queue
                                .get(&fill.asset_id)
                                .cloned()
                                .unwrap_or(RetryQueueEntry {
                                    asset_id: fill.asset_id.clone(),
                                    first_seen_block: fill.block_number,
                                    attempts: 0,
                                    pending_fills: 0,
                                    last_attempt_cycle: 0,
                                    exhausted: false,
                                })
                        });
                    entry.first_seen_block = entry.first_seen_block.min(fill.block_number);
                    entry.pending_fills += 1;
                }
            }
            report.inserted += 1;
            entries.push(Entry::Fill(fill));
        }
        for (_, entry) in staged_retry {
            entries.push(Entry::Retry(entry));
        }
        Ok((entries, report, max_ts))
    }

    /// Ingests a fill batch: dedup on `(tx_hash, log_index)`, timestamp
    /// stamping through the cache, token resolution, and retry-queue
    /// enrollment for unresolved assets. Unresolved fills are stored
    /// immediately with `market_id` unset.
    pub fn ingest_fills(&mut self, batch: Vec<FillRecord>) -> Result<FillIngestReport, EngineError> {
        let (entries, report, _) = self.stage_fills(batch, Vec::new())?;
        self.store.commit(entries)?;
        Ok(report)
    }

    // ------------------------------------------------------------------
    // oracle layer
    // ------------------------------------------------------------------

    fn stage_oracle(
        &mut self,
        batch: Vec<OracleEvent>,
        quarantined: Vec<Quarantined>,
    ) -> (Vec<Entry>, OracleIngestReport, Option<DateTime<Utc>>) {
        let mut report = OracleIngestReport {
            quarantined: quarantined.len() as u64,
            ..Default::default()
        };
        self.log_quarantine(quarantined);

        let mut entries = Vec::new();
        let mut seen: BTreeSet<(Hash32, u64)> = BTreeSet::new();
        let (mut staged_questions, mut staged_negrisk) = {
            let inner = self.store.read();
            (inner.question_map.clone(), inner.negrisk_map.clone())
        };
        let mut local_quarantine = Vec::new();
        let mut max_ts: Option<DateTime<Utc>> = None;
        for mut event in batch {
            let key = event.key();
            if self.store.has_oracle_event(&key) || !seen.insert(key) {
                report.duplicates += 1;
                continue;
            }
            let malformed = match event.event_type {
                OracleEventType::Propose => event.proposed_price.is_none(),
                OracleEventType::Settle => event.settled_price.is_none(),
                _ => false,
            };
            if malformed {
                report.quarantined += 1;
                local_quarantine.push(Quarantined {
                    layer: Layer::Oracle,
                    position: event.block_number,
                    reason: format!(
                        "{} event missing price {}:{}",
                        event.event_type, event.tx_hash, event.log_index
                    ),
                });
                continue;
            }
            if let Some(price) = event.settled_price {
                if !OracleEvent::is_standard_settle_price(price) {
                    event
                        .meta
                        .insert(NONSTANDARD_SETTLE_META_KEY.to_string(), "true".to_string());
                }
            }

            // bridge map maintenance
            if event.event_type == OracleEventType::Initialize {
                if let (Some(q), Some(c)) = (event.question_id, event.condition_id) {
                    if !staged_questions.contains_key(&q) {
                        staged_questions.insert(q, c);
                        entries.push(Entry::QuestionMap {
                            question_id: q,
                            condition_id: c,
                        });
                    }
                }
            }
            if let (Some(req), Some(q)) = (
                event.meta.get(NEGRISK_REQUEST_META_KEY).cloned(),
                event.question_id,
            ) {
                if !staged_negrisk.contains_key(&req) {
                    staged_negrisk.insert(req.clone(), q);
                    entries.push(Entry::NegriskMap {
                        request_id: req,
                        question_id: q,
                    });
                }
            }

            let view = OracleBridgeView {
                question_to_condition: &staged_questions,
                negrisk_to_question: &staged_negrisk,
            };
            match view.resolve(&event, self.options.toggles.bridge_paths, |c| {
                self.store.contains_market(c)
            }) {
                Some((market, path)) => {
                    event.market_id = Some(market);
                    event
                        .meta
                        .insert(RESOLVED_PATH_META_KEY.to_string(), path.as_str().to_string());
                    report.linked += 1;
                }
                None => {
                    report.unlinked += 1;
                }
            }
            max_ts = Some(max_ts.map_or(event.timestamp, |m: DateTime<Utc>| m.max(event.timestamp)));
            report.inserted += 1;
            entries.push(Entry::OracleEvent(event));
        }
        self.log_quarantine(local_quarantine);
        (entries, report, max_ts)
    }

    /// Ingests an oracle batch: dedup, lifecycle validation, bridge map
    /// maintenance from initialize/request payloads, and market linkage
    /// through the enabled resolution paths. Unlinked events are stored
    /// with `market_id` unset and re-linked on later cycles.
    pub fn ingest_oracle(
        &mut self,
        batch: Vec<OracleEvent>,
    ) -> Result<OracleIngestReport, EngineError> {
        let (entries, report, _) = self.stage_oracle(batch, Vec::new());
        self.store.commit(entries)?;
        Ok(report)
    }

    /// Re-attempts linkage for stored oracle events with no market.
    pub fn relink_oracle(&mut self) -> Result<u64, EngineError> {
        let (entries, count) = self.stage_relink();
        self.store.commit(entries)?;
        Ok(count)
    }

    fn stage_relink(&self) -> (Vec<Entry>, u64) {
        let inner = self.store.read();
        let view = OracleBridgeView {
            question_to_condition: &inner.question_map,
            negrisk_to_question: &inner.negrisk_map,
        };
        let mut entries = Vec::new();
        let mut count = 0;
        for event in inner.oracle_events.values() {
            if event.market_id.is_some() {
                continue;
            }
            if let Some((market, path)) = view.resolve(
                event,
                self.options.toggles.bridge_paths,
                |c| inner.markets.contains_key(c),
            ) {
                let mut updated = event.clone();
                updated.market_id = Some(market);
                updated
                    .meta
                    .insert(RESOLVED_PATH_META_KEY.to_string(), path.as_str().to_string());
                entries.push(Entry::OracleEvent(updated));
                count += 1;
            }
        }
        (entries, count)
    }

    // ------------------------------------------------------------------
    // recovery & retry
    // ------------------------------------------------------------------

    /// Reconstructs a minimal market record from on-chain registrations
    /// for a token the bridge cannot resolve. Existing API-provenance
    /// records are never clobbered; the existing record is returned.
    pub fn recover_market(&mut self, asset: &TokenId) -> Result<MarketRecord, RecoveryError> {
        if let Some(condition) = self.store.resolve_token(asset) {
            if let Some(existing) = self.store.get_market(&condition) {
                return Ok(existing);
            }
        }
        let registration = self
            .store
            .registration_for_token(asset)
            .ok_or_else(|| RecoveryError::NotFound(asset.clone()))?;

        if let Some(existing) = self.store.get_market(&registration.condition_id) {
            // market known through the API; just make sure the bridge
            // covers this token
            self.register_market_tokens(&existing)
                .map_err(RecoveryError::Engine)?;
            return Ok(existing);
        }

        let mut blocks = BTreeSet::new();
        blocks.insert(registration.block_number);
        let ts = self
            .timestamps_for(&blocks)
            .map_err(RecoveryError::Engine)?[&registration.block_number];
        let cond_hex = registration.condition_id.to_string();
        let short = &cond_hex[..12.min(cond_hex.len())];
        let recovered = MarketRecord {
            gamma_id: None,
            condition_id: registration.condition_id,
            question_id: None,
            oracle_address: self.options.default_oracle_address,
            yes_token: registration.token0.clone(),
            no_token: registration.token1.clone(),
            clob_token_ids: None,
            metadata: MarketMetadata {
                slug: format!("recovered-{short}"),
                title: format!("Recovered market {short}"),
                description: "Reconstructed from on-chain token registration.".to_string(),
                created_at: ts,
                end_date: None,
                category: None,
                tags: Vec::new(),
                event_slug: None,
                series_slug: None,
            },
            provenance: Provenance::OnchainRecovered,
        };
        let mut staged = self.store.read().token_bridge.clone();
        let mut entries = vec![Entry::Market(recovered.clone())];
        self.stage_market_tokens(&recovered, &mut staged, &mut entries);
        self.store.commit(entries).map_err(EngineError::from)?;
        Ok(recovered)
    }

    /// One retry pass: re-attempts resolution for every queued asset at
    /// most once per cycle, invoking on-chain recovery when enabled. On
    /// success all pending fills of the asset gain their market id.
    pub fn process_retry_queue(&mut self) -> Result<RetryReport, EngineError> {
        let cycle = self.store.sync_state().cycle_count + 1;
        let (entries, report) = self.stage_retry_pass(cycle)?;
        self.store.commit(entries)?;
        Ok(report)
    }

    fn stage_retry_pass(&mut self, cycle: u64) -> Result<(Vec<Entry>, RetryReport), EngineError> {
        let mut report = RetryReport::default();
        let mut entries = Vec::new();
        let queue = self.store.retry_entries();
        for mut entry in queue {
            if entry.exhausted || entry.last_attempt_cycle >= cycle {
                continue;
            }
            report.attempted += 1;
            let mut market_id = self.store.resolve_token(&entry.asset_id);
            if market_id.is_none() && self.options.toggles.onchain_recovery {
                match self.recover_market(&entry.asset_id.clone()) {
                    Ok(_) => {
                        report.recovered += 1;
                        market_id = self.store.resolve_token(&entry.asset_id);
                    }
                    Err(RecoveryError::NotFound(_)) => {}
                    Err(RecoveryError::Engine(e)) => return Err(e),
                }
            }
            match market_id {
                Some(condition) => {
                    for mut fill in self.store.unlinked_fills_of_asset(&entry.asset_id) {
                        fill.market_id = Some(condition);
                        entries.push(Entry::Fill(fill));
                    }
                    entries.push(Entry::RetryRemove {
                        asset_id: entry.asset_id.clone(),
                    });
                    report.resolved += 1;
                }
                None => {
                    entry.attempts += 1;
                    entry.last_attempt_cycle = cycle;
                    if entry.attempts >= self.options.retry_max_attempts {
                        entry.exhausted = true;
                        report.newly_exhausted += 1;
                    }
                    entries.push(Entry::Retry(entry));
                }
            }
        }
        Ok((entries, report))
    }

    // ------------------------------------------------------------------
    // the cycle
    // ------------------------------------------------------------------

    /// Runs one synchronization cycle: market discovery (registrations +
    /// metadata), fills, oracle events, then maintenance. Each layer
    /// commits atomically with its cursor; a crash at any boundary
    /// resumes to the identical final state.
    pub fn run_cycle(&mut self) -> Result<CycleReport, EngineError> {
        let state0 = self.store.sync_state();
        let cycle = state0.cycle_count + 1;
        let head = self
            .source
            .head_block()?
            .saturating_sub(self.options.confirmation_depth);
        let mut report = CycleReport {
            cycle,
            head_block: head,
            ..Default::default()
        };
        let cache0 = (self.cache_hits, self.cache_misses);
        let mut max_ts: Option<DateTime<Utc>> = None;
        let merge_ts = |a: Option<DateTime<Utc>>, b: Option<DateTime<Utc>>| match (a, b) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, None) => x,
            (None, y) => y,
        };

        // --- market discovery layer (registrations + metadata) ---
        let mut state = state0.clone();
        {
            let reg_cursor = state.cursor(Layer::Registration).max(1);
            let mut entries = Vec::new();
            if reg_cursor <= head {
                let scan = self.source.scan_token_registrations(reg_cursor, head)?;
                let (reg_entries, counts) = self.stage_registrations(scan, Vec::new());
                entries.extend(reg_entries);
                report.registration = counts;
                state.cursors.insert(Layer::Registration, head + 1);
            }
            let market_cursor = state.cursor(Layer::Market);
            let batch = self.source.poll_markets(SourceCursor {
                layer: Layer::Market,
                position: market_cursor,
            })?;
            let next = batch.next;
            let (m_entries, counts) =
                self.stage_markets(batch.records, market_cursor, batch.quarantined);
            entries.extend(m_entries);
            report.market = counts;
            state.cursors.insert(Layer::Market, next);
            entries.push(Entry::SyncState(state.clone()));
            self.store.commit(entries)?;
        }

        // --- fill layer ---
        {
            let cursor = state.cursor(Layer::Fill).max(1);
            let to = match self.options.max_blocks_per_cycle {
                Some(w) => head.min(cursor + w.max(1) - 1),
                None => head,
            };
            if cursor <= to {
                let scan = self.source.poll_fills(cursor, to)?;
                let (entries, fill_report, ts) = self.stage_fills(scan.fills, scan.quarantined)?;
                max_ts = merge_ts(max_ts, ts);
                report.fill = LayerCounts {
                    ingested: fill_report.inserted,
                    duplicates: fill_report.duplicates,
                    quarantined: fill_report.quarantined,
                };
                report.fill_resolved = fill_report.resolved;
                report.fill_unresolved = fill_report.unresolved;
                state.cursors.insert(Layer::Fill, to + 1);
                let mut entries = entries;
                entries.push(Entry::SyncState(state.clone()));
                self.store.commit(entries)?;
            }
        }

        // --- oracle layer ---
        {
            let cursor = state.cursor(Layer::Oracle);
            let batch = self.source.poll_oracle_events(SourceCursor {
                layer: Layer::Oracle,
                position: cursor,
            })?;
            let next = batch.next;
            let (mut entries, oracle_report, ts) =
                self.stage_oracle(batch.events, batch.quarantined);
            max_ts = merge_ts(max_ts, ts);
            report.oracle = LayerCounts {
                ingested: oracle_report.inserted,
                duplicates: oracle_report.duplicates,
                quarantined: oracle_report.quarantined,
            };
            report.oracle_linked = oracle_report.linked;
            report.oracle_unlinked = oracle_report.unlinked;
            state.cursors.insert(Layer::Oracle, next);
            entries.push(Entry::SyncState(state.clone()));
            self.store.commit(entries)?;
        }

        // --- maintenance: retries, recovery, opportunistic re-linking ---
        {
            let mut entries = Vec::new();
            if self.options.toggles.retry {
                let (retry_entries, retry_report) = self.stage_retry_pass(cycle)?;
                entries.extend(retry_entries);
                report.retry_attempted = retry_report.attempted;
                report.retry_resolved = retry_report.resolved;
                report.retry_exhausted = retry_report.newly_exhausted;
                report.recovered_markets = retry_report.recovered;
            }
            // commit retry results first so re-linking sees recovered
            // markets in the store
            self.store.commit(entries)?;
            let (relink_entries, relinked) = self.stage_relink();
            report.relinked_oracle = relinked;
            let mut entries = relink_entries;
            state.cycle_count = cycle;
            if let Some(ts) = max_ts {
                state.last_cycle_at = state.last_cycle_at.max(ts);
            }
            entries.push(Entry::SyncState(state));
            self.store.commit(entries)?;
        }

        report.cache_hits = self.cache_hits - cache0.0;
        report.cache_misses = self.cache_misses - cache0.1;
        Ok(report)
    }

    /// Runs cycles until every layer is caught up with the source head,
    /// returning all cycle reports. This is the backfill driver.
    pub fn run_to_head(&mut self) -> Result<Vec<CycleReport>, EngineError> {
        let mut reports = Vec::new();
        loop {
            let head = self
                .source
                .head_block()?
                .saturating_sub(self.options.confirmation_depth);
            let state = self.store.sync_state();
            let caught_up = state.cursor(Layer::Fill).max(1) > head
                && state.cursor(Layer::Registration).max(1) > head;
            if caught_up && !reports.is_empty() {
                break;
            }
            reports.push(self.run_cycle()?);
            if reports.len() > 100_000 {
                return Err(EngineError::Source(SourceError::Unavailable(
                    "backfill failed to converge".into(),
                )));
            }
        }
        Ok(reports)
    }
}

/// Tags resolution paths for reuse in reports.
pub fn path_tag(path: ResolutionPath) -> &'static str {
    path.as_str()
}
