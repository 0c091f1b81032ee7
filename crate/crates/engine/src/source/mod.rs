//! Pull-based source interface over the three data layers plus on-chain
//! token registrations.
//!
//! Every layer is consumed through explicit positions: block ranges for
//! the chain layers, stream ordinals for the metadata and oracle feeds.
//! Cursors are exclusive low watermarks (`position` = records consumed /
//! first unscanned block), so a fresh cursor starts at zero and never
//! regresses. Polling the same position twice returns the same batch.

pub mod fixture;
pub mod live;
pub mod sim;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

use polyflow_core::{FillRecord, MarketRecord, OracleEvent, TokenRegistration};

pub use fixture::{load_fixtures, write_fixtures};
pub use live::LiveSource;

/// The independently synchronized data layers.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Market,
    Fill,
    Oracle,
    Registration,
}

impl Layer {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Market => "market",
            Self::Fill => "fill",
            Self::Oracle => "oracle",
            Self::Registration => "registration",
        }
    }

    pub const ALL: [Layer; 4] = [Self::Market, Self::Fill, Self::Oracle, Self::Registration];
}

/// Per-layer checkpoint token. `position` is layer-specific but always
/// totally ordered: stream ordinal for market/oracle feeds, block number
/// for the chain layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCursor {
    pub layer: Layer,
    pub position: u64,
}

impl SourceCursor {
    pub fn origin(layer: Layer) -> Self {
        Self { layer, position: 0 }
    }
}

#[derive(Debug, Error)]
pub enum SourceError {
    /// Transient upstream failure; the caller retries a later cycle.
    #[error("source unavailable: {0}")]
    Unavailable(String),
    #[error("unknown block {0}")]
    UnknownBlock(u64),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("cursor layer mismatch: expected {expected:?}, got {got:?}")]
    BadCursor { expected: Layer, got: Layer },
}

/// A record the source could not decode. The pipeline skips it and logs
/// the triple instead of halting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quarantined {
    pub layer: Layer,
    pub position: u64,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct MarketBatch {
    pub records: Vec<MarketRecord>,
    pub next: u64,
    pub quarantined: Vec<Quarantined>,
}

#[derive(Debug, Default)]
pub struct OracleBatch {
    pub events: Vec<OracleEvent>,
    pub next: u64,
    pub quarantined: Vec<Quarantined>,
}

#[derive(Debug, Default)]
pub struct FillScan {
    pub fills: Vec<FillRecord>,
    pub quarantined: Vec<Quarantined>,
}

/// Uniform pull interface over one upstream deployment (simulator,
/// fixture directory, or live endpoints).
pub trait DataSource: Send + Sync {
    /// Highest block currently visible at the source.
    fn head_block(&self) -> Result<u64, SourceError>;

    /// Market metadata strictly after `cursor.position`, in stream order.
    fn poll_markets(&self, cursor: SourceCursor) -> Result<MarketBatch, SourceError>;

    /// Every fill log in the inclusive block range from both exchange
    /// contracts, ordered by `(block_number, log_index)`. `market_id` is
    /// left unset; linking is the ingestion pipeline's job.
    fn poll_fills(&self, from_block: u64, to_block: u64) -> Result<FillScan, SourceError>;

    /// Oracle events strictly after `cursor.position`, merged across all
    /// configured oracle/adapter contracts in position order.
    fn poll_oracle_events(&self, cursor: SourceCursor) -> Result<OracleBatch, SourceError>;

    /// `TokenRegistered` events in the inclusive block range from both
    /// exchange contracts.
    fn scan_token_registrations(
        &self,
        from_block: u64,
        to_block: u64,
    ) -> Result<Vec<TokenRegistration>, SourceError>;

    /// Timestamp of one block; monotone non-decreasing in block number.
    fn block_timestamp(&self, block: u64) -> Result<DateTime<Utc>, SourceError>;
}

/// Fully materialized source: a static event universe served through
/// the pull interface. Backs both the simulator and fixture directories.
///
/// `head` is a visibility clock. Records above it do not exist yet from
/// the consumer's point of view, which is how live chain growth is
/// emulated across sync cycles.
pub struct MemorySource {
    markets: Vec<MarketStreamRow>,
    fills: Vec<FillRecord>,
    oracle: Vec<OracleEvent>,
    registrations: Vec<TokenRegistration>,
    start_time: DateTime<Utc>,
    seconds_per_block: u32,
    max_block: u64,
    head: AtomicU64,
    timestamp_fetches: AtomicU64,
    pending_quarantine: parking_lot::Mutex<Vec<Quarantined>>,
}

/// One entry of the market metadata stream: the record plus the block
/// at which the upstream API first serves it. Late arrivals model
/// metadata landing after the first trades.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketStreamRow {
    pub arrival_block: u64,
    pub record: MarketRecord,
}

impl MemorySource {
    pub fn new(
        mut markets: Vec<MarketStreamRow>,
        mut fills: Vec<FillRecord>,
        mut oracle: Vec<OracleEvent>,
        mut registrations: Vec<TokenRegistration>,
        start_time: DateTime<Utc>,
        seconds_per_block: u32,
        max_block: u64,
    ) -> Self {
        markets.sort_by(|a, b| {
            (a.arrival_block, &a.record.condition_id).cmp(&(b.arrival_block, &b.record.condition_id))
        });
        fills.sort_by_key(|f| (f.block_number, f.log_index));
        oracle.sort_by_key(|e| (e.block_number, e.log_index));
        registrations.sort_by_key(|r| (r.block_number, r.log_index));
        Self {
            markets,
            fills,
            oracle,
            registrations,
            start_time,
            seconds_per_block,
            max_block,
            head: AtomicU64::new(max_block),
            timestamp_fetches: AtomicU64::new(0),
            pending_quarantine: parking_lot::Mutex::new(Vec::new()),
        }
    }

    /// Moves the visibility clock. Only records at or below `block` are
    /// served afterwards.
    pub fn set_head(&self, block: u64) {
        self.head.store(block.min(self.max_block), Ordering::SeqCst);
    }

    pub fn max_block(&self) -> u64 {
        self.max_block
    }

    /// Number of `block_timestamp` calls served so far (cache ablations
    /// count upstream fetches through this).
    pub fn timestamp_fetches(&self) -> u64 {
        self.timestamp_fetches.load(Ordering::SeqCst)
    }

    pub(crate) fn push_quarantine(&self, q: Vec<Quarantined>) {
        self.pending_quarantine.lock().extend(q);
    }

    fn take_quarantine(&self, layer: Layer) -> Vec<Quarantined> {
        let mut pending = self.pending_quarantine.lock();
        let (take, keep): (Vec<_>, Vec<_>) =
            pending.drain(..).partition(|q| q.layer == layer);
        *pending = keep;
        take
    }
}

impl DataSource for MemorySource {
    fn head_block(&self) -> Result<u64, SourceError> {
        Ok(self.head.load(Ordering::SeqCst))
    }

    fn poll_markets(&self, cursor: SourceCursor) -> Result<MarketBatch, SourceError> {
        if cursor.layer != Layer::Market {
            return Err(SourceError::BadCursor {
                expected: Layer::Market,
                got: cursor.layer,
            });
        }
        let head = self.head.load(Ordering::SeqCst);
        let available = self
            .markets
            .iter()
            .take_while(|row| row.arrival_block <= head)
            .count() as u64;
        let from = cursor.position.min(available) as usize;
        let records = self.markets[from..available as usize]
            .iter()
            .map(|row| row.record.clone())
            .collect();
        Ok(MarketBatch {
            records,
            next: available.max(cursor.position),
            quarantined: self.take_quarantine(Layer::Market),
        })
    }

    fn poll_fills(&self, from_block: u64, to_block: u64) -> Result<FillScan, SourceError> {
        let head = self.head.load(Ordering::SeqCst);
        let to = to_block.min(head);
        let fills = self
            .fills
            .iter()
            .filter(|f| f.block_number >= from_block && f.block_number <= to)
            .cloned()
            .collect();
        Ok(FillScan {
            fills,
            quarantined: self.take_quarantine(Layer::Fill),
        })
    }

    fn poll_oracle_events(&self, cursor: SourceCursor) -> Result<OracleBatch, SourceError> {
        if cursor.layer != Layer::Oracle {
            return Err(SourceError::BadCursor {
                expected: Layer::Oracle,
                got: cursor.layer,
            });
        }
        let head = self.head.load(Ordering::SeqCst);
        let available = self
            .oracle
            .iter()
            .take_while(|e| e.block_number <= head)
            .count() as u64;
        let from = cursor.position.min(available) as usize;
        let events = self.oracle[from..available as usize].to_vec();
        Ok(OracleBatch {
            events,
            next: available.max(cursor.position),
            quarantined: self.take_quarantine(Layer::Oracle),
        })
    }

    fn scan_token_registrations(
        &self,
        from_block: u64,
        to_block: u64,
    ) -> Result<Vec<TokenRegistration>, SourceError> {
        let head = self.head.load(Ordering::SeqCst);
        let to = to_block.min(head);
        Ok(self
            .registrations
            .iter()
            .filter(|r| r.block_number >= from_block && r.block_number <= to)
            .cloned()
            .collect())
    }

    fn block_timestamp(&self, block: u64) -> Result<DateTime<Utc>, SourceError> {
        // blocks are 1-based; block 1 is genesis at the start time
        if block == 0 || block > self.max_block {
            return Err(SourceError::UnknownBlock(block));
        }
        self.timestamp_fetches.fetch_add(1, Ordering::SeqCst);
        Ok(self.start_time
            + chrono::Duration::seconds((block - 1) as i64 * self.seconds_per_block as i64))
    }
}
