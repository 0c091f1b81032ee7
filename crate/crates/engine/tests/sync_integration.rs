//! End-to-end behavior of the sync engine over simulator universes:
//! dedup idempotence, retry-based association, on-chain recovery,
//! crash/resume equivalence, and replay safety.

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use polyflow_core::{
    FillMeta, FillRecord, Hash32, MarketMetadata, MarketRecord, Provenance, Side, SourceContract,
    TokenId, TokenRegistration,
};
use polyflow_engine::source::sim::{generate_lifecycle, LifecycleUniverse, SimConfig};
use polyflow_engine::source::{DataSource, MemorySource};
use polyflow_engine::{
    compute_quality, materialize_summaries, BridgePaths, Entry, RecoveryError,
    Store, SyncEngine, SyncOptions,
};

fn engine_over(
    universe: &LifecycleUniverse,
    store: Arc<Store>,
    options: SyncOptions,
) -> (SyncEngine, Arc<MemorySource>) {
    let source = Arc::new(universe.source());
    let engine = SyncEngine::new(source.clone(), store, options).unwrap();
    (engine, source)
}

fn default_universe() -> LifecycleUniverse {
    generate_lifecycle(&SimConfig {
        seed: 7,
        n_markets: 25,
        dispute_rate: 0.2,
        trades_mean: 8.0,
        horizon_days: 20,
        ..SimConfig::default()
    })
    .unwrap()
}

#[test]
fn empty_source_cycle_is_noop() {
    let empty = MemorySource::new(
        vec![],
        vec![],
        vec![],
        vec![],
        Utc.with_ymd_and_hms(2025, 10, 1, 0, 0, 0).unwrap(),
        2,
        0,
    );
    let store = Arc::new(Store::in_memory());
    let mut engine =
        SyncEngine::new(Arc::new(empty), store.clone(), SyncOptions::default()).unwrap();
    let before = store.sync_state().cursors.clone();
    let report = engine.run_cycle().unwrap();
    assert_eq!(report.fill.ingested, 0);
    assert_eq!(report.market.ingested, 0);
    assert_eq!(report.oracle.ingested, 0);
    assert_eq!(store.sync_state().cursors, before, "cursors unchanged");
}

#[test]
fn full_run_ingests_every_generated_record() {
    let universe = default_universe();
    let store = Arc::new(Store::in_memory());
    let (mut engine, _) = engine_over(&universe, store.clone(), SyncOptions::default());
    engine.run_to_head().unwrap();

    assert_eq!(store.fill_count(), universe.stats.fills);
    assert_eq!(store.oracle_event_count(), universe.stats.oracle_events);
    assert_eq!(store.registration_count(), universe.stats.registrations);

    // with recovery enabled every traded token resolves
    let unresolved = store.fills().iter().filter(|f| f.market_id.is_none()).count();
    assert_eq!(unresolved, 0, "all fills linked on simulator universes");

    materialize_summaries(&store, None).unwrap();
    let quality = compute_quality(&store);
    assert_eq!(quality.broken_reference_count, 0);
    assert_eq!(quality.oracle_event_link_rate, Some(1.0));

    // conservation per layer: ingested + duplicates + quarantined = seen
    assert_eq!(quality.total_fills, universe.stats.fills);
}

#[test]
fn reingesting_everything_is_idempotent() {
    let universe = default_universe();
    let store = Arc::new(Store::in_memory());
    let (mut engine, _) = engine_over(&universe, store.clone(), SyncOptions::default());
    engine.run_to_head().unwrap();
    let bytes_once = store.canonical_state_bytes();

    // push the exact same batches again through the public ingest ops
    let report = engine.ingest_fills(universe.fills.clone()).unwrap();
    assert_eq!(report.inserted, 0);
    assert_eq!(report.duplicates, universe.stats.fills);
    let oreport = engine.ingest_oracle(universe.oracle_events.clone()).unwrap();
    assert_eq!(oreport.inserted, 0);
    assert_eq!(oreport.duplicates, universe.stats.oracle_events);

    assert_eq!(store.canonical_state_bytes(), bytes_once);
}

#[test]
fn overlapping_window_replay_is_byte_identical() {
    let universe = generate_lifecycle(&SimConfig {
        seed: 11,
        n_markets: 30,
        trades_mean: 6.0,
        ..SimConfig::default()
    })
    .unwrap();

    // run A: single pass
    let store_a = Arc::new(Store::in_memory());
    let (mut engine_a, _) = engine_over(&universe, store_a.clone(), SyncOptions::default());
    engine_a.run_to_head().unwrap();

    // run B: fills and registrations scanned in 50%-overlapping windows
    let store_b = Arc::new(Store::in_memory());
    let (mut engine_b, source_b) = engine_over(&universe, store_b.clone(), SyncOptions::default());
    let max = universe.max_block;
    let window = (max / 7).max(2);
    let mut from = 1u64;
    // metadata and oracle streams first so linking matches run A's final state
    engine_b
        .ingest_markets(
            source_b
                .poll_markets(polyflow_engine::SourceCursor::origin(
                    polyflow_engine::Layer::Market,
                ))
                .unwrap()
                .records,
        )
        .unwrap();
    while from <= max {
        let to = (from + window).min(max);
        let regs = source_b.scan_token_registrations(from, to).unwrap();
        store_b
            .commit(
                regs.into_iter()
                    .filter(|r| !store_b.has_registration(&r.key()))
                    .map(Entry::Registration)
                    .collect(),
            )
            .unwrap();
        let fills = source_b.poll_fills(from, to).unwrap().fills;
        engine_b.ingest_fills(fills).unwrap();
        // 50% overlap
        from += (window / 2).max(1);
    }
    engine_b
        .ingest_oracle(
            source_b
                .poll_oracle_events(polyflow_engine::SourceCursor::origin(
                    polyflow_engine::Layer::Oracle,
                ))
                .unwrap()
                .events,
        )
        .unwrap();
    engine_b.process_retry_queue().unwrap();
    engine_b.relink_oracle().unwrap();

    assert_eq!(
        store_a.canonical_state_bytes(),
        store_b.canonical_state_bytes()
    );
}

#[test]
fn crash_between_layers_resumes_to_identical_state() {
    let universe = default_universe();

    // uninterrupted run
    let store_a = Arc::new(Store::in_memory());
    let (mut engine_a, _) = engine_over(&universe, store_a.clone(), SyncOptions::default());
    engine_a.run_to_head().unwrap();
    materialize_summaries(&store_a, None).unwrap();
    let quality_a = compute_quality(&store_a);

    // crashed run: first cycle dies after the fill-layer commit (before
    // the oracle poll), mimicking a process kill; resume in a fresh
    // process over the same journal
    let dir = tempfile::tempdir().unwrap();
    {
        let store = Arc::new(Store::open(dir.path()).unwrap());
        let (mut engine, _) = engine_over(&universe, store.clone(), SyncOptions::default());
        // allow market-discovery commit, fill commit (plus the timestamp
        // cache commit in between), then fail
        store.set_commit_failpoint(Some(3));
        assert!(engine.run_cycle().is_err());
    }
    {
        let store = Arc::new(Store::open(dir.path()).unwrap());
        let (mut engine, _) = engine_over(&universe, store.clone(), SyncOptions::default());
        engine.run_to_head().unwrap();
        materialize_summaries(&store, None).unwrap();
        let quality_b = compute_quality(&store);
        assert_eq!(quality_a, quality_b);
        assert_eq!(
            store_a.canonical_state_bytes(),
            store.canonical_state_bytes()
        );
    }
}

#[test]
fn resume_at_cycle_boundary_matches_uninterrupted() {
    let universe = default_universe();
    let window = universe.max_block / 4 + 1;

    let run = |crash_after: Option<usize>| {
        let dir = tempfile::tempdir().unwrap();
        let mut opts = SyncOptions::default();
        opts.max_blocks_per_cycle = Some(window);
        {
            let store = Arc::new(Store::open(dir.path()).unwrap());
            let (mut engine, _) = engine_over(&universe, store.clone(), opts.clone());
            let mut cycles = 0;
            loop {
                let state = store.sync_state();
                if state.cursor(polyflow_engine::Layer::Fill).max(1) > universe.max_block {
                    break;
                }
                engine.run_cycle().unwrap();
                cycles += 1;
                if crash_after == Some(cycles) {
                    // drop the engine and store: simulated process death
                    break;
                }
            }
        }
        // resumed (or continued) process
        let store = Arc::new(Store::open(dir.path()).unwrap());
        let mut opts2 = opts.clone();
        opts2.quarantine_path = None;
        let (mut engine, _) = engine_over(&universe, store.clone(), opts2);
        loop {
            let state = store.sync_state();
            if state.cursor(polyflow_engine::Layer::Fill).max(1) > universe.max_block {
                break;
            }
            engine.run_cycle().unwrap();
        }
        engine.run_cycle().unwrap(); // final maintenance pass
        materialize_summaries(&store, None).unwrap();
        (compute_quality(&store), store.canonical_state_bytes())
    };

    let (quality_full, bytes_full) = run(None);
    for crash_at in [1, 2, 3] {
        let (quality, bytes) = run(Some(crash_at));
        assert_eq!(quality, quality_full, "crash at cycle {crash_at}");
        assert_eq!(bytes, bytes_full, "crash at cycle {crash_at}");
    }
}

#[test]
fn cursors_never_regress_across_cycles() {
    let universe = default_universe();
    let store = Arc::new(Store::in_memory());
    let mut opts = SyncOptions::default();
    opts.max_blocks_per_cycle = Some(universe.max_block / 5 + 1);
    let (mut engine, _) = engine_over(&universe, store.clone(), opts);
    let mut prev = store.sync_state();
    for _ in 0..8 {
        engine.run_cycle().unwrap();
        let cur = store.sync_state();
        for layer in polyflow_engine::Layer::ALL {
            assert!(cur.cursor(layer) >= prev.cursor(layer));
        }
        assert!(cur.cycle_count > prev.cycle_count);
        prev = cur;
    }
}

// ---------------------------------------------------------------------
// op-level scenarios with handcrafted records
// ---------------------------------------------------------------------

fn h(n: u8) -> Hash32 {
    Hash32::from_bytes([n; 32])
}

fn addr(n: u8) -> polyflow_core::Address {
    polyflow_core::Address::from_bytes([n; 20])
}

fn handcrafted_source() -> MemorySource {
    MemorySource::new(
        vec![],
        vec![],
        vec![],
        vec![],
        Utc.with_ymd_and_hms(2025, 10, 1, 0, 0, 0).unwrap(),
        2,
        1_000_000,
    )
}

fn registration(n: u8, t0: &str, t1: &str, block: u64) -> TokenRegistration {
    TokenRegistration {
        token0: TokenId::from(t0),
        token1: TokenId::from(t1),
        condition_id: h(n),
        source_contract: SourceContract::CtfExchange,
        block_number: block,
        tx_hash: h(n + 100),
        log_index: 0,
    }
}

fn fill_on(token: &str, tx: u8, log: u64, block: u64) -> FillRecord {
    FillRecord {
        tx_hash: h(tx),
        log_index: log,
        block_number: block,
        maker: addr(1),
        taker: addr(2),
        asset_id: TokenId::from(token),
        maker_amount: 100_000_000,
        taker_amount: 52_000_000,
        fee: 0,
        size: 0.0,
        price: 0.0,
        market_id: None,
        meta: FillMeta {
            source_contract: SourceContract::CtfExchange,
            timestamp: Utc.with_ymd_and_hms(2025, 10, 1, 0, 0, 0).unwrap(),
            side: Side::Buy,
        },
    }
    .with_derived_decimals()
    .unwrap()
}

fn api_market(n: u8, yes: &str, no: &str) -> MarketRecord {
    MarketRecord {
        gamma_id: Some(format!("g-{n}")),
        condition_id: h(n),
        question_id: Some(h(n + 50)),
        oracle_address: addr(9),
        yes_token: TokenId::from(yes),
        no_token: TokenId::from(no),
        clob_token_ids: Some(vec![TokenId::from(yes), TokenId::from(no)]),
        metadata: MarketMetadata {
            slug: format!("market-{n}"),
            title: format!("Market {n}"),
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

#[test]
fn registered_but_unlisted_token_recovers_and_links() {
    let store = Arc::new(Store::in_memory());
    let mut engine =
        SyncEngine::new(Arc::new(handcrafted_source()), store.clone(), SyncOptions::default())
            .unwrap();

    // registration exists on chain, metadata never arrives
    store
        .commit(vec![Entry::Registration(registration(1, "11", "12", 40))])
        .unwrap();
    let report = engine.ingest_fills(vec![fill_on("11", 3, 0, 50)]).unwrap();
    assert_eq!((report.inserted, report.unresolved), (1, 1));

    let retry = engine.process_retry_queue().unwrap();
    assert_eq!(retry.resolved, 1);
    assert_eq!(retry.recovered, 1);
    let fill = store.fills().pop().unwrap();
    assert_eq!(fill.market_id, Some(h(1)));

    let recovered = store.get_market(&h(1)).unwrap();
    assert_eq!(recovered.provenance, Provenance::OnchainRecovered);
    assert!(recovered.gamma_id.is_none(), "recovered records lack a gamma id");
}

#[test]
fn recovery_never_clobbers_api_records() {
    let store = Arc::new(Store::in_memory());
    let mut engine =
        SyncEngine::new(Arc::new(handcrafted_source()), store.clone(), SyncOptions::default())
            .unwrap();
    let market = api_market(1, "11", "12");
    engine.ingest_markets(vec![market.clone()]).unwrap();
    store
        .commit(vec![Entry::Registration(registration(1, "11", "12", 40))])
        .unwrap();

    let got = engine.recover_market(&TokenId::from("11")).unwrap();
    assert_eq!(got, market, "existing api record returned, not replaced");
    assert_eq!(store.market_count(), 1);
}

#[test]
fn unregistered_token_recovery_not_found_and_retry_exhausts() {
    let store = Arc::new(Store::in_memory());
    let mut opts = SyncOptions::default();
    opts.retry_max_attempts = 3;
    let mut engine =
        SyncEngine::new(Arc::new(handcrafted_source()), store.clone(), opts).unwrap();

    assert!(matches!(
        engine.recover_market(&TokenId::from("999")),
        Err(RecoveryError::NotFound(_))
    ));

    engine.ingest_fills(vec![fill_on("999", 4, 0, 60)]).unwrap();
    // empty-queue -> (0, 0) after the entry resolves or here: 3 passes
    for pass in 1..=3u64 {
        // each standalone pass acts as a fresh cycle
        store
            .commit(vec![Entry::SyncState({
                let mut s = store.sync_state();
                s.cycle_count = pass;
                s
            })])
            .unwrap();
        let report = engine.process_retry_queue().unwrap();
        if pass < 3 {
            assert_eq!(report.newly_exhausted, 0, "pass {pass}");
        } else {
            assert_eq!(report.newly_exhausted, 1, "exhausted after 3 passes");
        }
    }
    let entry = &store.retry_entries()[0];
    assert!(entry.exhausted);
    assert_eq!(entry.attempts, 3);
    // exhausted tokens surface in the quality report
    assert_eq!(compute_quality(&store).exhausted_retry_tokens, 1);
    // further passes skip exhausted entries
    let report = engine.process_retry_queue().unwrap();
    assert_eq!((report.attempted, report.resolved), (0, 0));
}

#[test]
fn late_metadata_resolves_via_retry_between_cycles() {
    let store = Arc::new(Store::in_memory());
    let mut opts = SyncOptions::default();
    opts.toggles.onchain_recovery = false; // isolate the retry path
    let mut engine =
        SyncEngine::new(Arc::new(handcrafted_source()), store.clone(), opts).unwrap();

    // cycle 1: fills arrive before metadata
    let report = engine.ingest_fills(vec![fill_on("11", 3, 0, 50)]).unwrap();
    assert_eq!(report.unresolved, 1);
    let retry = engine.process_retry_queue().unwrap();
    assert_eq!((retry.attempted, retry.resolved), (1, 0));

    // metadata arrives between cycles
    engine.ingest_markets(vec![api_market(1, "11", "12")]).unwrap();
    store
        .commit(vec![Entry::SyncState({
            let mut s = store.sync_state();
            s.cycle_count = 1;
            s
        })])
        .unwrap();
    let retry = engine.process_retry_queue().unwrap();
    assert_eq!(retry.resolved, 1);
    assert_eq!(store.fills()[0].market_id, Some(h(1)));
    assert!(store.retry_entries().is_empty());

    // queue now empty
    let retry = engine.process_retry_queue().unwrap();
    assert_eq!((retry.attempted, retry.resolved), (0, 0));
}

#[test]
fn oracle_linking_and_replay() {
    let store = Arc::new(Store::in_memory());
    let mut engine =
        SyncEngine::new(Arc::new(handcrafted_source()), store.clone(), SyncOptions::default())
            .unwrap();
    engine.ingest_markets(vec![api_market(1, "11", "12")]).unwrap();

    let ts = Utc.with_ymd_and_hms(2025, 10, 2, 0, 0, 0).unwrap();
    let init = polyflow_core::OracleEvent {
        tx_hash: h(60),
        log_index: 0,
        block_number: 70,
        timestamp: ts,
        event_type: polyflow_core::OracleEventType::Initialize,
        requester: None,
        question_id: Some(h(51)),
        condition_id: Some(h(1)),
        market_id: None,
        source_contract: addr(9),
        actor: None,
        ancillary: None,
        proposed_price: None,
        settled_price: None,
        meta: Default::default(),
    };
    let mut settle = init.clone();
    settle.tx_hash = h(61);
    settle.event_type = polyflow_core::OracleEventType::Settle;
    settle.condition_id = None; // forces the adapter path
    settle.settled_price = Some(1.0);

    let report = engine.ingest_oracle(vec![init.clone(), settle.clone()]).unwrap();
    assert_eq!(report.linked, 2);
    let stored = store.oracle_events();
    let linked = stored.iter().find(|e| e.tx_hash == h(61)).unwrap();
    assert_eq!(linked.market_id, Some(h(1)));
    assert_eq!(linked.meta.get("resolved_path").map(String::as_str), Some("adapter"));

    // replay: duplicates increment, nothing changes
    let before = store.canonical_state_bytes();
    let report = engine.ingest_oracle(vec![init, settle]).unwrap();
    assert_eq!(report.duplicates, 2);
    assert_eq!(store.canonical_state_bytes(), before);

    // unknown question id stays unlinked
    let mut orphan = store.oracle_events()[0].clone();
    orphan.tx_hash = h(62);
    orphan.question_id = Some(h(99));
    orphan.condition_id = None;
    orphan.market_id = None;
    orphan.meta.clear();
    let report = engine.ingest_oracle(vec![orphan]).unwrap();
    assert_eq!(report.unlinked, 1);
}

#[test]
fn bridge_path_ablation_is_monotone() {
    let universe = generate_lifecycle(&SimConfig {
        seed: 21,
        n_markets: 40,
        indirect_oracle_rate: 0.3,
        metadata_withheld_rate: 0.0,
        trades_mean: 3.0,
        ..SimConfig::default()
    })
    .unwrap();

    let run_with = |paths: BridgePaths| {
        let store = Arc::new(Store::in_memory());
        let mut opts = SyncOptions::default();
        opts.toggles.bridge_paths = paths;
        let (mut engine, _) = engine_over(&universe, store.clone(), opts);
        engine.run_to_head().unwrap();
        let q = compute_quality(&store);
        (q.linked_oracle_events, q.total_oracle_events)
    };

    let subsets = [
        BridgePaths { direct: true, adapter: false, negrisk: false },
        BridgePaths { direct: true, adapter: true, negrisk: false },
        BridgePaths::all(),
    ];
    let mut last = 0;
    for paths in subsets {
        let (linked, total) = run_with(paths);
        assert!(linked >= last, "adding a path never reduces linkage");
        assert_eq!(total, universe.stats.oracle_events);
        last = linked;
    }
    // full paths on a fully-visible universe link everything
    let (linked, total) = run_with(BridgePaths::all());
    assert_eq!(linked, total);
    // direct-only linkage equals the directly-identified event count
    let (direct_linked, total) = run_with(BridgePaths::direct_only());
    assert_eq!(
        direct_linked,
        total - universe.stats.indirect_oracle_events
    );
}

#[test]
fn timestamp_cache_serves_repeats_without_fetches() {
    let universe = default_universe();
    let store = Arc::new(Store::in_memory());
    let (mut engine, source) = engine_over(&universe, store.clone(), SyncOptions::default());

    let blocks: BTreeSet<u64> = universe.fills.iter().map(|f| f.block_number).collect();
    assert!(engine.timestamps_for(&BTreeSet::new()).unwrap().is_empty());

    let first = engine.timestamps_for(&blocks).unwrap();
    let fetches_after_first = source.timestamp_fetches();
    assert_eq!(fetches_after_first, blocks.len() as u64);

    let second = engine.timestamps_for(&blocks).unwrap();
    assert_eq!(source.timestamp_fetches(), fetches_after_first, "zero new fetches");
    assert_eq!(first, second);
    let (hits, misses) = engine.cache_counters();
    assert_eq!(misses, blocks.len() as u64);
    assert_eq!(hits, blocks.len() as u64);

    // carried fill timestamps agree with the cache-stamped values
    for f in &universe.fills {
        assert_eq!(first[&f.block_number], f.meta.timestamp);
    }
}

#[test]
fn cache_toggle_off_fetches_every_time() {
    let universe = default_universe();
    let store = Arc::new(Store::in_memory());
    let mut opts = SyncOptions::default();
    opts.toggles.timestamp_cache = false;
    let (mut engine, source) = engine_over(&universe, store.clone(), opts);
    let blocks: BTreeSet<u64> = universe.fills.iter().take(20).map(|f| f.block_number).collect();
    engine.timestamps_for(&blocks).unwrap();
    engine.timestamps_for(&blocks).unwrap();
    assert_eq!(source.timestamp_fetches(), 2 * blocks.len() as u64);
    assert_eq!(store.cached_block_count(), 0);
}

#[test]
fn recovery_toggle_off_leaves_tokens_unresolved() {
    let universe = generate_lifecycle(&SimConfig {
        seed: 31,
        n_markets: 20,
        metadata_withheld_rate: 0.5,
        min_trades_per_market: 2,
        late_metadata_rate: 0.0,
        trades_mean: 3.0,
        ..SimConfig::default()
    })
    .unwrap();

    let resolve_rate = |recovery: bool| {
        let store = Arc::new(Store::in_memory());
        let mut opts = SyncOptions::default();
        opts.toggles.onchain_recovery = recovery;
        let (mut engine, _) = engine_over(&universe, store.clone(), opts);
        engine.run_to_head().unwrap();
        let tokens: BTreeSet<TokenId> =
            universe.fills.iter().map(|f| f.asset_id.clone()).collect();
        let resolved = tokens
            .iter()
            .filter(|t| store.resolve_token(t).is_some())
            .count();
        (resolved, tokens.len())
    };

    let (api_only, total) = resolve_rate(false);
    let (with_recovery, _) = resolve_rate(true);
    assert_eq!(with_recovery, total, "recovery resolves all traded tokens");
    // exactly the withheld markets' tokens stay unresolved
    let withheld_tokens = universe
        .markets
        .iter()
        .filter(|m| !m.visible && m.trade_count > 0)
        .count()
        * 2;
    assert_eq!(api_only, total - withheld_tokens);
}
