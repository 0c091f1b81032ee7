//! Fixture directories: the four source streams persisted in the
//! canonical line-delimited record format, plus a manifest carrying the
//! block-clock parameters. A fixture round-trips exactly what a source
//! serves, so engine runs over fixtures reproduce simulator runs.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use polyflow_core::ndjson;
use polyflow_core::{FillRecord, OracleEvent, TokenRegistration};

use super::sim::{LifecycleUniverse, UniverseStats};
use super::{Layer, MarketStreamRow, MemorySource, Quarantined, SourceError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MARKETS_FILE: &str = "markets.ndjson";
pub const FILLS_FILE: &str = "fills.ndjson";
pub const ORACLE_FILE: &str = "oracle_events.ndjson";
pub const REGISTRATIONS_FILE: &str = "registrations.ndjson";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureManifest {
    #[serde(with = "polyflow_core::time::iso_seconds")]
    pub start_time: DateTime<Utc>,
    pub seconds_per_block: u32,
    pub max_block: u64,
    pub stats: UniverseStats,
}

fn io_err(e: std::io::Error) -> SourceError {
    SourceError::Unavailable(format!("fixture io: {e}"))
}

/// Writes the source-visible streams of a universe. Withheld markets are
/// deliberately absent from the metadata stream; their tokens surface
/// only through registrations and fills, exactly as a live source would
/// expose them.
pub fn write_fixtures(dir: &Path, universe: &LifecycleUniverse) -> Result<(), SourceError> {
    fs::create_dir_all(dir).map_err(io_err)?;
    let manifest = FixtureManifest {
        start_time: universe.config.start_time,
        seconds_per_block: universe.config.seconds_per_block,
        max_block: universe.max_block,
        stats: universe.stats.clone(),
    };
    let mut f = BufWriter::new(File::create(dir.join(MANIFEST_FILE)).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut f, &manifest)
        .map_err(|e| SourceError::Unavailable(e.to_string()))?;
    f.write_all(b"\n").map_err(io_err)?;
    f.flush().map_err(io_err)?;

    let rows: Vec<MarketStreamRow> = universe
        .markets
        .iter()
        .filter(|m| m.visible)
        .map(|m| MarketStreamRow {
            arrival_block: m.arrival_block,
            record: m.record.clone(),
        })
        .collect();
    write_stream(&dir.join(MARKETS_FILE), &rows)?;
    write_stream(&dir.join(FILLS_FILE), &universe.fills)?;
    write_stream(&dir.join(ORACLE_FILE), &universe.oracle_events)?;
    write_stream(&dir.join(REGISTRATIONS_FILE), &universe.registrations)?;
    Ok(())
}

fn write_stream<T: Serialize>(path: &Path, items: &[T]) -> Result<(), SourceError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    ndjson::write_all(&mut w, items).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn read_stream<T: serde::de::DeserializeOwned>(
    path: &Path,
    layer: Layer,
    quarantine: &mut Vec<Quarantined>,
) -> Result<Vec<T>, SourceError> {
    let file = File::open(path)
        .map_err(|e| SourceError::Unavailable(format!("open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    use std::io::BufRead;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        match ndjson::from_line(&line) {
            Ok(v) => out.push(v),
            Err(e) => quarantine.push(Quarantined {
                layer,
                position: idx as u64 + 1,
                reason: format!("decode: {e}"),
            }),
        }
    }
    Ok(out)
}

/// Loads a fixture directory into a servable source. Malformed lines are
/// skipped and surfaced as quarantined records on the first poll of the
/// owning layer.
pub fn load_fixtures(dir: &Path) -> Result<MemorySource, SourceError> {
    let manifest_file = File::open(dir.join(MANIFEST_FILE))
        .map_err(|e| SourceError::Unavailable(format!("open manifest: {e}")))?;
    let manifest: FixtureManifest = serde_json::from_reader(BufReader::new(manifest_file))
        .map_err(|e| SourceError::Unavailable(format!("manifest: {e}")))?;

    let mut quarantine = Vec::new();
    let markets: Vec<MarketStreamRow> =
        read_stream(&dir.join(MARKETS_FILE), Layer::Market, &mut quarantine)?;
    let fills: Vec<FillRecord> = read_stream(&dir.join(FILLS_FILE), Layer::Fill, &mut quarantine)?;
    let oracle: Vec<OracleEvent> =
        read_stream(&dir.join(ORACLE_FILE), Layer::Oracle, &mut quarantine)?;
    let registrations: Vec<TokenRegistration> = read_stream(
        &dir.join(REGISTRATIONS_FILE),
        Layer::Registration,
        &mut quarantine,
    )?;

    let source = MemorySource::new(
        markets,
        fills,
        oracle,
        registrations,
        manifest.start_time,
        manifest.seconds_per_block,
        manifest.max_block,
    );
    source.push_quarantine(quarantine);
    Ok(source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::sim::{generate_lifecycle, SimConfig};
    use crate::source::{DataSource, SourceCursor};

    #[test]
    fn fixture_roundtrip_serves_identical_streams() {
        let u = generate_lifecycle(&SimConfig {
            n_markets: 8,
            ..SimConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_fixtures(dir.path(), &u).unwrap();
        let fixture = load_fixtures(dir.path()).unwrap();
        let sim = u.source();

        let a = sim.poll_fills(0, u.max_block).unwrap().fills;
        let b = fixture.poll_fills(0, u.max_block).unwrap().fills;
        assert_eq!(a, b);

        let cursor = SourceCursor::origin(Layer::Market);
        assert_eq!(
            sim.poll_markets(cursor).unwrap().records,
            fixture.poll_markets(cursor).unwrap().records
        );
        let cursor = SourceCursor::origin(Layer::Oracle);
        assert_eq!(
            sim.poll_oracle_events(cursor).unwrap().events,
            fixture.poll_oracle_events(cursor).unwrap().events
        );
        assert_eq!(
            sim.scan_token_registrations(0, u.max_block).unwrap(),
            fixture.scan_token_registrations(0, u.max_block).unwrap()
        );
        assert_eq!(
            sim.block_timestamp(100).unwrap(),
            fixture.block_timestamp(100).unwrap()
        );
    }

    #[test]
    fn corrupt_line_is_quarantined_not_fatal() {
        let u = generate_lifecycle(&SimConfig {
            n_markets: 4,
            ..SimConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_fixtures(dir.path(), &u).unwrap();
        // corrupt one fill line
        let fills_path = dir.path().join(FILLS_FILE);
        let text = std::fs::read_to_string(&fills_path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let n_before = lines.len();
        lines[0] = "{not valid json";
        std::fs::write(&fills_path, lines.join("\n")).unwrap();

        let fixture = load_fixtures(dir.path()).unwrap();
        let scan = fixture.poll_fills(0, u.max_block).unwrap();
        assert_eq!(scan.fills.len(), n_before - 1);
        assert_eq!(scan.quarantined.len(), 1);
        assert_eq!(scan.quarantined[0].layer, Layer::Fill);
        assert_eq!(scan.quarantined[0].position, 1);
    }
}
