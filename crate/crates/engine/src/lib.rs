//! Data-acquisition engine: pull-based sources for the three event
//! layers, cross-source identifier resolution, a journaled relational
//! store, and the checkpointed synchronization cycle that ties them
//! together into resumable, duplicate-safe ingestion.

pub mod bridge;
pub mod source;
pub mod store;
pub mod sync;

pub use bridge::{BridgePaths, BridgeSource, BridgeStats, OracleBridgeView, ResolutionPath, TokenBridgeEntry};
pub use source::{
    DataSource, FillScan, Layer, LiveSource, MarketBatch, MemorySource, OracleBatch, Quarantined,
    SourceCursor, SourceError,
};
pub use source::sim::{generate_lifecycle, CpiGroupConfig, FeeStep, LifecycleUniverse, SimConfig};
pub use store::quality::{compute_bridge_stats, compute_quality};
pub use store::summary::materialize_summaries;
pub use store::{ConflictRecord, Entry, MarketDaySummary, QualityReport, Store, StoreError};
pub use sync::{
    CycleReport, EngineError, EngineToggles, FillIngestReport, OracleIngestReport, RecoveryError,
    RetryQueueEntry, RetryReport, SyncEngine, SyncOptions, SyncState,
};
