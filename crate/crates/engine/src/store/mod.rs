//! Canonical relational store: markets, fills, oracle events, the
//! bridge and cache relations, materialized market-day summaries, and
//! synchronization metadata.
//!
//! Persistence is an append-only journal of batch-committed entries.
//! A batch becomes visible only when its commit marker is durably
//! written, so a torn tail (crash mid-batch) is discarded on reopen and
//! the layer cursor persisted inside the batch rolls back with it —
//! exactly the replay-safe resume semantics the sync engine needs.
//! In-memory state is a set of keyed maps; the canonical export is the
//! key-ordered line-delimited rendering of the data relations.

pub mod quality;
pub mod summary;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use polyflow_core::ndjson;
use polyflow_core::{FillRecord, Hash32, MarketRecord, OracleEvent, TokenId, TokenRegistration};

use crate::bridge::{BridgeSource, TokenBridgeEntry};
use crate::source::Layer;

pub use quality::{EventTypeLinkage, QualityReport};
pub use summary::MarketDaySummary;

pub type EventKey = (Hash32, u64);

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage unavailable: {0}")]
    Unavailable(String),
    #[error("duplicate key: {0}")]
    DuplicateKey(String),
    #[error("journal corrupt at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        Self::Unavailable(e.to_string())
    }
}

/// Per-layer synchronization checkpoints. Cursors are exclusive low
/// watermarks (records consumed / first unscanned block) and never
/// regress across persisted states. `last_cycle_at` tracks the highest
/// data timestamp observed, keeping outputs independent of wall clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncState {
    pub cursors: BTreeMap<Layer, u64>,
    #[serde(with = "polyflow_core::time::iso_seconds")]
    pub last_cycle_at: DateTime<Utc>,
    pub cycle_count: u64,
}

impl Default for SyncState {
    fn default() -> Self {
        Self {
            cursors: Layer::ALL.iter().map(|l| (*l, 0)).collect(),
            last_cycle_at: Utc.timestamp_opt(0, 0).unwrap(),
            cycle_count: 0,
        }
    }
}

impl SyncState {
    pub fn cursor(&self, layer: Layer) -> u64 {
        self.cursors.get(&layer).copied().unwrap_or(0)
    }
}

/// A traded token awaiting market linkage. `attempts` advances at most
/// once per sync cycle (`last_attempt_cycle` guards reruns of an
/// interrupted cycle), which keeps resumed runs byte-equivalent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryQueueEntry {
    pub asset_id: TokenId,
    pub first_seen_block: u64,
    pub attempts: u32,
    pub pending_fills: u64,
    pub last_attempt_cycle: u64,
    pub exhausted: bool,
}

/// A token claimed by two different condition ids; the bridge kept the
/// higher-priority mapping and this row records the rejection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub asset_id: TokenId,
    pub kept_condition: Hash32,
    pub rejected_condition: Hash32,
    pub rejected_source: BridgeSource,
}

/// One journal entry. A batch of entries followed by a commit marker is
/// the unit of atomicity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rel", content = "val", rename_all = "snake_case")]
pub enum Entry {
    Market(MarketRecord),
    Fill(FillRecord),
    OracleEvent(OracleEvent),
    Registration(TokenRegistration),
    TokenBridge(TokenBridgeEntry),
    QuestionMap {
        question_id: Hash32,
        condition_id: Hash32,
    },
    NegriskMap {
        request_id: String,
        question_id: Hash32,
    },
    BlockTimestamp {
        block: u64,
        #[serde(with = "polyflow_core::time::iso_seconds")]
        timestamp: DateTime<Utc>,
    },
    Summary(MarketDaySummary),
    Retry(RetryQueueEntry),
    RetryRemove {
        asset_id: TokenId,
    },
    Conflict(ConflictRecord),
    SyncState(SyncState),
    Commit {
        seq: u64,
    },
}

#[derive(Default)]
pub(crate) struct StoreInner {
    pub(crate) markets: BTreeMap<Hash32, MarketRecord>,
    pub(crate) fills: BTreeMap<EventKey, FillRecord>,
    pub(crate) fills_by_block: BTreeSet<(u64, EventKey)>,
    pub(crate) fills_by_asset: BTreeMap<TokenId, BTreeSet<EventKey>>,
    pub(crate) oracle_events: BTreeMap<EventKey, OracleEvent>,
    pub(crate) registrations: BTreeMap<EventKey, TokenRegistration>,
    pub(crate) registration_by_token: BTreeMap<TokenId, EventKey>,
    pub(crate) token_bridge: BTreeMap<TokenId, (Hash32, BridgeSource)>,
    pub(crate) question_map: BTreeMap<Hash32, Hash32>,
    pub(crate) negrisk_map: BTreeMap<String, Hash32>,
    pub(crate) block_timestamps: BTreeMap<u64, DateTime<Utc>>,
    pub(crate) summaries: BTreeMap<(Hash32, NaiveDate), MarketDaySummary>,
    pub(crate) retry_queue: BTreeMap<TokenId, RetryQueueEntry>,
    pub(crate) conflicts: BTreeMap<(TokenId, Hash32), ConflictRecord>,
    pub(crate) sync_state: Option<SyncState>,
    pub(crate) committed_seq: u64,
}

impl StoreInner {
    fn apply(&mut self, entry: Entry) {
        match entry {
            Entry::Market(m) => {
                self.markets.insert(m.condition_id, m);
            }
            Entry::Fill(f) => {
                let key = f.key();
                self.fills_by_block.insert((f.block_number, key));
                self.fills_by_asset
                    .entry(f.asset_id.clone())
                    .or_default()
                    .insert(key);
                self.fills.insert(key, f);
            }
            Entry::OracleEvent(e) => {
                self.oracle_events.insert(e.key(), e);
            }
            Entry::Registration(r) => {
                self.registration_by_token
                    .entry(r.token0.clone())
                    .or_insert_with(|| r.key());
                self.registration_by_token
                    .entry(r.token1.clone())
                    .or_insert_with(|| r.key());
                self.registrations.insert(r.key(), r);
            }
            Entry::TokenBridge(e) => {
                self.token_bridge
                    .insert(e.asset_id, (e.condition_id, e.source));
            }
            Entry::QuestionMap {
                question_id,
                condition_id,
            } => {
                self.question_map.entry(question_id).or_insert(condition_id);
            }
            Entry::NegriskMap {
                request_id,
                question_id,
            } => {
                self.negrisk_map.entry(request_id).or_insert(question_id);
            }
            Entry::BlockTimestamp { block, timestamp } => {
                // cached values are immutable once written
                self.block_timestamps.entry(block).or_insert(timestamp);
            }
            Entry::Summary(s) => {
                self.summaries.insert((s.market_id, s.day), s);
            }
            Entry::Retry(r) => {
                self.retry_queue.insert(r.asset_id.clone(), r);
            }
            Entry::RetryRemove { asset_id } => {
                self.retry_queue.remove(&asset_id);
            }
            Entry::Conflict(c) => {
                self.conflicts
                    .insert((c.asset_id.clone(), c.rejected_condition), c);
            }
            Entry::SyncState(s) => {
                if let Some(prev) = &self.sync_state {
                    debug_assert!(
                        Layer::ALL
                            .iter()
                            .all(|l| s.cursor(*l) >= prev.cursor(*l)),
                        "sync cursors must never regress"
                    );
                }
                self.sync_state = Some(s);
            }
            Entry::Commit { seq } => {
                self.committed_seq = seq;
            }
        }
    }
}

struct JournalWriter {
    file: BufWriter<File>,
}

/// The store handle. One writer at a time commits batches; readers take
/// snapshots under a shared lock.
pub struct Store {
    inner: RwLock<StoreInner>,
    journal: Mutex<Option<JournalWriter>>,
    path: Option<PathBuf>,
    fail_after_commits: Mutex<Option<u64>>,
}

pub const JOURNAL_FILE: &str = "journal.ndjson";

impl Store {
    /// Ephemeral store without persistence (tests, analytics scratch).
    pub fn in_memory() -> Self {
        Self {
            inner: RwLock::new(StoreInner::default()),
            journal: Mutex::new(None),
            path: None,
            fail_after_commits: Mutex::new(None),
        }
    }

    /// Opens (or creates) a persistent store in `dir`, replaying the
    /// journal. Uncommitted tails from an interrupted run are dropped.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let journal_path = dir.join(JOURNAL_FILE);
        let mut inner = StoreInner::default();
        if journal_path.exists() {
            let mut text = String::new();
            File::open(&journal_path)?.read_to_string(&mut text)?;
            replay(&mut inner, &text)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)?;
        Ok(Self {
            inner: RwLock::new(inner),
            journal: Mutex::new(Some(JournalWriter {
                file: BufWriter::new(file),
            })),
            path: Some(dir.to_path_buf()),
            fail_after_commits: Mutex::new(None),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Test hook: the next `n` commits succeed, then commits fail with
    /// `Unavailable` (no memory or journal mutation) until cleared.
    pub fn set_commit_failpoint(&self, after: Option<u64>) {
        *self.fail_after_commits.lock() = after;
    }

    /// Atomically applies a batch: all entries plus a commit marker hit
    /// the journal before any of them becomes visible in memory.
    pub fn commit(&self, batch: Vec<Entry>) -> Result<(), StoreError> {
        {
            let mut fp = self.fail_after_commits.lock();
            if let Some(remaining) = fp.as_mut() {
                if *remaining == 0 {
                    return Err(StoreError::Unavailable("injected commit failure".into()));
                }
                *remaining -= 1;
            }
        }
        if batch.is_empty() {
            return Ok(());
        }
        let seq = self.inner.read().committed_seq + 1;
        let mut journal = self.journal.lock();
        if let Some(w) = journal.as_mut() {
            let mut buf = String::new();
            for entry in &batch {
                buf.push_str(&ndjson::to_line(entry));
                buf.push('\n');
            }
            buf.push_str(&ndjson::to_line(&Entry::Commit { seq }));
            buf.push('\n');
            w.file.write_all(buf.as_bytes())?;
            w.file.flush()?;
        }
        let mut inner = self.inner.write();
        for entry in batch {
            inner.apply(entry);
        }
        inner.apply(Entry::Commit { seq });
        Ok(())
    }

    pub(crate) fn read(&self) -> parking_lot::RwLockReadGuard<'_, StoreInner> {
        self.inner.read()
    }

    // ----- markets -----

    pub fn market_count(&self) -> u64 {
        self.read().markets.len() as u64
    }

    pub fn get_market(&self, condition_id: &Hash32) -> Option<MarketRecord> {
        self.read().markets.get(condition_id).cloned()
    }

    pub fn contains_market(&self, condition_id: &Hash32) -> bool {
        self.read().markets.contains_key(condition_id)
    }

    pub fn markets(&self) -> Vec<MarketRecord> {
        self.read().markets.values().cloned().collect()
    }

    /// Insert-only primitive: duplicate condition ids are an error so
    /// callers can count dedups. Batch ingestion uses `commit` directly.
    pub fn try_insert_market(&self, market: MarketRecord) -> Result<(), StoreError> {
        if self.contains_market(&market.condition_id) {
            return Err(StoreError::DuplicateKey(market.condition_id.to_string()));
        }
        self.commit(vec![Entry::Market(market)])
    }

    // ----- fills -----

    pub fn fill_count(&self) -> u64 {
        self.read().fills.len() as u64
    }

    pub fn get_fill(&self, key: &EventKey) -> Option<FillRecord> {
        self.read().fills.get(key).cloned()
    }

    pub fn has_fill(&self, key: &EventKey) -> bool {
        self.read().fills.contains_key(key)
    }

    pub fn fills(&self) -> Vec<FillRecord> {
        self.read().fills.values().cloned().collect()
    }

    pub fn try_insert_fill(&self, fill: FillRecord) -> Result<(), StoreError> {
        if self.has_fill(&fill.key()) {
            return Err(StoreError::DuplicateKey(format!(
                "{}:{}",
                fill.tx_hash, fill.log_index
            )));
        }
        self.commit(vec![Entry::Fill(fill)])
    }

    pub fn fills_in_block_range(&self, from: u64, to: u64) -> Vec<FillRecord> {
        let inner = self.read();
        inner
            .fills_by_block
            .range((from, (Hash32::ZERO, 0))..=(to, (Hash32::from_bytes([0xff; 32]), u64::MAX)))
            .map(|(_, key)| inner.fills[key].clone())
            .collect()
    }

    pub fn fills_of_market(&self, condition_id: &Hash32) -> Vec<FillRecord> {
        let inner = self.read();
        let mut out: Vec<FillRecord> = inner
            .fills
            .values()
            .filter(|f| f.market_id.as_ref() == Some(condition_id))
            .cloned()
            .collect();
        out.sort_by_key(|f| (f.block_number, f.log_index));
        out
    }

    pub fn unlinked_fills_of_asset(&self, asset: &TokenId) -> Vec<FillRecord> {
        let inner = self.read();
        inner
            .fills_by_asset
            .get(asset)
            .map(|keys| {
                keys.iter()
                    .map(|k| &inner.fills[k])
                    .filter(|f| f.market_id.is_none())
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    // ----- oracle events -----

    pub fn oracle_event_count(&self) -> u64 {
        self.read().oracle_events.len() as u64
    }

    pub fn has_oracle_event(&self, key: &EventKey) -> bool {
        self.read().oracle_events.contains_key(key)
    }

    pub fn oracle_events(&self) -> Vec<OracleEvent> {
        self.read().oracle_events.values().cloned().collect()
    }

    pub fn oracle_events_of_market(&self, condition_id: &Hash32) -> Vec<OracleEvent> {
        let inner = self.read();
        let mut out: Vec<OracleEvent> = inner
            .oracle_events
            .values()
            .filter(|e| e.market_id.as_ref() == Some(condition_id))
            .cloned()
            .collect();
        out.sort_by_key(|e| (e.block_number, e.log_index));
        out
    }

    pub fn unlinked_oracle_events(&self) -> Vec<OracleEvent> {
        self.read()
            .oracle_events
            .values()
            .filter(|e| e.market_id.is_none())
            .cloned()
            .collect()
    }

    // ----- registrations & bridge -----

    pub fn registration_count(&self) -> u64 {
        self.read().registrations.len() as u64
    }

    pub fn has_registration(&self, key: &EventKey) -> bool {
        self.read().registrations.contains_key(key)
    }

    pub fn registration_for_token(&self, token: &TokenId) -> Option<TokenRegistration> {
        let inner = self.read();
        inner
            .registration_by_token
            .get(token)
            .map(|key| inner.registrations[key].clone())
    }

    pub fn resolve_token(&self, token: &TokenId) -> Option<Hash32> {
        self.read().token_bridge.get(token).map(|(c, _)| *c)
    }

    pub fn token_bridge_entries(&self) -> Vec<TokenBridgeEntry> {
        self.read()
            .token_bridge
            .iter()
            .map(|(t, (c, s))| TokenBridgeEntry {
                asset_id: t.clone(),
                condition_id: *c,
                source: *s,
            })
            .collect()
    }

    pub fn question_condition(&self, question: &Hash32) -> Option<Hash32> {
        self.read().question_map.get(question).copied()
    }

    pub fn block_timestamp_cached(&self, block: u64) -> Option<DateTime<Utc>> {
        self.read().block_timestamps.get(&block).copied()
    }

    pub fn cached_block_count(&self) -> u64 {
        self.read().block_timestamps.len() as u64
    }

    // ----- summaries -----

    pub fn summaries(&self) -> Vec<MarketDaySummary> {
        self.read().summaries.values().cloned().collect()
    }

    pub fn summary_count(&self) -> u64 {
        self.read().summaries.len() as u64
    }

    pub fn summaries_in_day_range(&self, from: NaiveDate, to: NaiveDate) -> Vec<MarketDaySummary> {
        self.read()
            .summaries
            .values()
            .filter(|s| s.day >= from && s.day <= to)
            .cloned()
            .collect()
    }

    pub fn summaries_of_market(&self, condition_id: &Hash32) -> Vec<MarketDaySummary> {
        let inner = self.read();
        inner
            .summaries
            .range((*condition_id, NaiveDate::MIN)..=(*condition_id, NaiveDate::MAX))
            .map(|(_, s)| s.clone())
            .collect()
    }

    // ----- sync metadata -----

    pub fn sync_state(&self) -> SyncState {
        self.read().sync_state.clone().unwrap_or_default()
    }

    pub fn retry_entries(&self) -> Vec<RetryQueueEntry> {
        self.read().retry_queue.values().cloned().collect()
    }

    pub fn conflicts(&self) -> Vec<ConflictRecord> {
        self.read().conflicts.values().cloned().collect()
    }

    /// Canonical byte rendering of the data relations, key-ordered.
    /// Synchronization metadata (cursors, retry bookkeeping) is process
    /// history, not data, and is deliberately excluded: two runs that
    /// ingested the same universe through different window schedules
    /// must compare equal here.
    pub fn canonical_state_bytes(&self) -> Vec<u8> {
        let inner = self.read();
        let mut out = Vec::new();
        let section = |name: &str, out: &mut Vec<u8>| {
            out.extend_from_slice(b"# ");
            out.extend_from_slice(name.as_bytes());
            out.push(b'\n');
        };
        section("markets", &mut out);
        for m in inner.markets.values() {
            out.extend(ndjson::to_line(m).into_bytes());
            out.push(b'\n');
        }
        section("fills", &mut out);
        for f in inner.fills.values() {
            out.extend(ndjson::to_line(f).into_bytes());
            out.push(b'\n');
        }
        section("oracle_events", &mut out);
        for e in inner.oracle_events.values() {
            out.extend(ndjson::to_line(e).into_bytes());
            out.push(b'\n');
        }
        section("registrations", &mut out);
        for r in inner.registrations.values() {
            out.extend(ndjson::to_line(r).into_bytes());
            out.push(b'\n');
        }
        section("token_bridge", &mut out);
        for (t, (c, s)) in inner.token_bridge.iter() {
            let entry = TokenBridgeEntry {
                asset_id: t.clone(),
                condition_id: *c,
                source: *s,
            };
            out.extend(ndjson::to_line(&entry).into_bytes());
            out.push(b'\n');
        }
        section("question_map", &mut out);
        for (q, c) in inner.question_map.iter() {
            out.extend(format!("{{\"question_id\":\"{q}\",\"condition_id\":\"{c}\"}}\n").into_bytes());
        }
        section("negrisk_map", &mut out);
        for (r, q) in inner.negrisk_map.iter() {
            out.extend(format!("{{\"request_id\":\"{r}\",\"question_id\":\"{q}\"}}\n").into_bytes());
        }
        section("block_timestamps", &mut out);
        for (b, t) in inner.block_timestamps.iter() {
            out.extend(
                format!(
                    "{{\"block\":{b},\"timestamp\":\"{}\"}}\n",
                    polyflow_core::time::format_utc_seconds(t)
                )
                .into_bytes(),
            );
        }
        section("summaries", &mut out);
        for s in inner.summaries.values() {
            out.extend(ndjson::to_line(s).into_bytes());
            out.push(b'\n');
        }
        out
    }

    /// Writes each data relation as a canonical line-delimited file
    /// under `dir` for offline inspection.
    pub fn export_relations(&self, dir: &Path) -> Result<(), StoreError> {
        std::fs::create_dir_all(dir)?;
        let inner = self.read();
        write_relation(dir, "markets.ndjson", inner.markets.values())?;
        write_relation(dir, "fills.ndjson", inner.fills.values())?;
        write_relation(dir, "oracle_events.ndjson", inner.oracle_events.values())?;
        write_relation(dir, "registrations.ndjson", inner.registrations.values())?;
        let bridge: Vec<TokenBridgeEntry> = inner
            .token_bridge
            .iter()
            .map(|(t, (c, s))| TokenBridgeEntry {
                asset_id: t.clone(),
                condition_id: *c,
                source: *s,
            })
            .collect();
        write_relation(dir, "token_bridge.ndjson", bridge.iter())?;
        write_relation(dir, "summaries.ndjson", inner.summaries.values())?;
        Ok(())
    }
}

fn write_relation<'a, T: Serialize + 'a>(
    dir: &Path,
    name: &str,
    items: impl Iterator<Item = &'a T>,
) -> Result<(), StoreError> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    for item in items {
        w.write_all(ndjson::to_line(item).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Replays journal text into fresh state. Batches without a commit
/// marker are dropped; a malformed line is tolerated only in the
/// uncommitted tail (torn write), otherwise the journal is corrupt.
fn replay(inner: &mut StoreInner, text: &str) -> Result<(), StoreError> {
    let mut pending: Vec<Entry> = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match ndjson::from_line::<Entry>(line) {
            Ok(Entry::Commit { seq }) => {
                for entry in pending.drain(..) {
                    inner.apply(entry);
                }
                inner.apply(Entry::Commit { seq });
            }
            Ok(entry) => pending.push(entry),
            Err(e) => {
                let in_committed_region = lines[idx + 1..]
                    .iter()
                    .any(|l| l.contains("\"rel\":\"commit\""));
                if in_committed_region {
                    return Err(StoreError::Corrupt {
                        line: idx + 1,
                        reason: e.to_string(),
                    });
                }
                // torn tail: discard this line and everything after
                break;
            }
        }
    }
    Ok(())
}
