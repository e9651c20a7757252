//! On-disk state: the routine table as an append-only JSON-lines log of
//! sealed rows plus a checksummed snapshot, and plain JSON documents for the
//! other session records.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use attune_core::prompts::sha256_hex;
use attune_core::routine::{RoutineRow, RoutineTable};
use serde::Serialize;
use thiserror::Error;

pub const ROUTINE_LOG: &str = "routine.jsonl";
pub const ROUTINE_SNAPSHOT: &str = "routine.snapshot";
const SNAPSHOT_MAGIC: &str = "attune-routine v1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt store {path}: {reason}")]
    CorruptStore { path: PathBuf, reason: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(bytes).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable state");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Snapshot text: a header line with the SHA-256 of the JSON body, then the body.
pub fn encode_snapshot(table: &RoutineTable) -> String {
    let body = serde_json::to_string(table).expect("serializable table");
    format!(
        "{SNAPSHOT_MAGIC} sha256={} bytes={}\n{body}\n",
        sha256_hex(body.as_bytes()),
        body.len()
    )
}

pub fn decode_snapshot(text: &str, path: &Path) -> Result<RoutineTable, StoreError> {
    let corrupt = |reason: &str| StoreError::CorruptStore {
        path: path.to_owned(),
        reason: reason.into(),
    };
    let (header, rest) = text
        .split_once('\n')
        .ok_or_else(|| corrupt("missing header"))?;
    let mut fields = header
        .strip_prefix(SNAPSHOT_MAGIC)
        .ok_or_else(|| corrupt("unknown format"))?
        .split_whitespace();
    let digest = fields
        .next()
        .and_then(|f| f.strip_prefix("sha256="))
        .ok_or_else(|| corrupt("missing checksum"))?;
    let len: usize = fields
        .next()
        .and_then(|f| f.strip_prefix("bytes="))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| corrupt("missing length"))?;
    let body = rest.strip_suffix('\n').unwrap_or(rest);
    if body.len() != len {
        return Err(corrupt("length mismatch"));
    }
    if sha256_hex(body.as_bytes()) != digest {
        return Err(corrupt("checksum mismatch"));
    }
    serde_json::from_str(body).map_err(|e| corrupt(&e.to_string()))
}

pub fn persist(path: &Path, table: &RoutineTable) -> Result<(), StoreError> {
    write_atomic(path, encode_snapshot(table).as_bytes())
}

pub fn load(path: &Path) -> Result<RoutineTable, StoreError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    decode_snapshot(&text, path)
}

/// Routine persistence for one session directory.
#[derive(Debug, Clone)]
pub struct RoutineStore {
    dir: PathBuf,
}

impl RoutineStore {
    /// Opens `dir` for a new session, discarding an earlier log.
    pub fn create(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let log = dir.join(ROUTINE_LOG);
        File::create(&log).map_err(io(&log))?;
        Ok(RoutineStore {
            dir: dir.to_owned(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends a sealed row to the log, then rewrites the snapshot.
    pub fn seal(&self, row: &RoutineRow, table: &RoutineTable) -> Result<(), StoreError> {
        let log = self.dir.join(ROUTINE_LOG);
        let mut f = OpenOptions::new()
            .append(true)
            .open(&log)
            .map_err(io(&log))?;
        let mut line = serde_json::to_string(row).expect("serializable row");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io(&log))?;
        f.sync_data().map_err(io(&log))?;
        persist(&self.dir.join(ROUTINE_SNAPSHOT), table)
    }

    pub fn load_snapshot(&self) -> Result<RoutineTable, StoreError> {
        load(&self.dir.join(ROUTINE_SNAPSHOT))
    }

    /// Rows from the append-only log, in order.
    pub fn load_log(&self) -> Result<Vec<RoutineRow>, StoreError> {
        let path = self.dir.join(ROUTINE_LOG);
        let f = File::open(&path).map_err(io(&path))?;
        BufReader::new(f)
            .lines()
            .enumerate()
            .map(|(i, line)| {
                let line = line.map_err(io(&path))?;
                serde_json::from_str(&line).map_err(|e| StoreError::CorruptStore {
                    path: path.clone(),
                    reason: format!("line {}: {e}", i + 1),
                })
            })
            .collect()
    }
}
