//! Canonical line-delimited record IO: one JSON record per line, UTF-8.
//! Serialization is deterministic (struct field order, fixed timestamp
//! and hex formats), so equal values produce byte-equal lines.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NdjsonError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("record types serialize infallibly")
}

pub fn from_line<T: DeserializeOwned>(line: &str) -> Result<T, serde_json::Error> {
    serde_json::from_str(line)
}

pub fn write_all<T: Serialize, W: Write>(mut w: W, items: &[T]) -> io::Result<()> {
    for item in items {
        w.write_all(to_line(item).as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads every record from a line-delimited stream, reporting the first
/// malformed line with its 1-based line number. Blank lines are skipped.
pub fn read_all<T: DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<T>, NdjsonError> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = from_line(&line).map_err(|source| NdjsonError::Parse {
            line: idx + 1,
            source,
        })?;
        out.push(value);
    }
    Ok(out)
}
