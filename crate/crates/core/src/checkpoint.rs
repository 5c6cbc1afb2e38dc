//! Sealed window artifacts: the off-chain NDJSON payload file, the on-chain
//! checkpoint object, and the off-chain mirror log of anchored checkpoints.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::{self, CanonicalRecord};
use crate::merkle::{self, Digest};
use crate::ndjson::{self, AppendLog, NdjsonError};
use crate::utc;
use crate::windowing::{self, WindowError, WindowKey};

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("payload {0} already exists with different content")]
    ExistsConflict(PathBuf),
    #[error("window {0} is empty and the empty-window policy forbids anchoring")]
    EmptyWindow(String),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("invalid checkpoint: {0}")]
    Invalid(String),
    #[error(transparent)]
    Log(#[from] NdjsonError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// What to do with a window that has no records left after dedupe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyWindowPolicy {
    /// Emit nothing.
    #[default]
    Skip,
    /// Anchor a zero-count checkpoint whose root is `SHA-256("")`.
    Anchor,
}

/// Root recorded for an anchored empty window.
pub fn empty_window_root() -> Digest {
    merkle::leaf_hash(b"")
}

/// The on-chain anchor for one window. Field order is alphabetical so the
/// serde output is already canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Checkpoint {
    pub blockchain_stream: String,
    pub merkle_root: Digest,
    pub offset_end: u64,
    pub offset_start: u64,
    pub payload_path: String,
    pub payload_sha256: Digest,
    pub record_count: u64,
    pub source_stream: String,
    pub window_end: String,
    pub window_id: String,
    pub window_start: String,
}

/// Field names of the checkpoint object, in serialization order.
pub const CHECKPOINT_FIELDS: [&str; 11] = [
    "blockchainStream",
    "merkleRoot",
    "offsetEnd",
    "offsetStart",
    "payloadPath",
    "payloadSha256",
    "recordCount",
    "sourceStream",
    "windowEnd",
    "windowId",
    "windowStart",
];

impl Checkpoint {
    /// Canonical JSON bytes; this is the value published on the ledger.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("checkpoint serializes");
        canonical::to_canonical_json(&value).expect("checkpoint has no floats")
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        let cp: Checkpoint = serde_json::from_slice(bytes)
            .map_err(|e| CheckpointError::Invalid(e.to_string()))?;
        cp.validate()?;
        Ok(cp)
    }

    pub fn window_key(&self) -> Result<WindowKey, CheckpointError> {
        let start = utc::parse_utc_strict(&self.window_start)
            .ok_or_else(|| CheckpointError::Invalid(format!("windowStart {}", self.window_start)))?;
        let end = utc::parse_utc_strict(&self.window_end)
            .ok_or_else(|| CheckpointError::Invalid(format!("windowEnd {}", self.window_end)))?;
        Ok(WindowKey::from_bounds(self.source_stream.clone(), start, end)?)
    }

    /// Checks the structural invariants: id grammar and offsets ordering.
    pub fn validate(&self) -> Result<(), CheckpointError> {
        let key = self.window_key()?;
        if key.window_id()? != self.window_id {
            return Err(CheckpointError::Invalid(format!(
                "windowId {} does not match source and bounds",
                self.window_id
            )));
        }
        if self.record_count >= 1 && self.offset_start > self.offset_end {
            return Err(CheckpointError::Invalid("offsetStart > offsetEnd".into()));
        }
        Ok(())
    }
}

/// A written payload file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadFile {
    /// Logical path recorded in the checkpoint (`<baseDir>/<name>`).
    pub path: String,
    /// Where the file actually lives (`root` joined with `path`).
    pub fs_path: PathBuf,
    /// Canonical lines in file order, without terminators.
    pub lines: Vec<String>,
}

impl PayloadFile {
    pub fn record_count(&self) -> u64 {
        self.lines.len() as u64
    }
}

/// `<sourceStream>_<startISO'>_<endISO'>.json` with `:` replaced by `_`.
pub fn payload_file_name(key: &WindowKey) -> Result<String, CheckpointError> {
    let start = utc::format_utc_filename(key.start_epoch).ok_or(WindowError::OutOfRange)?;
    let end = utc::format_utc_filename(key.end_epoch).ok_or(WindowError::OutOfRange)?;
    Ok(format!("{}_{}_{}.json", key.source_stream.replace(':', "_"), start, end))
}

/// Joins a logical base directory and file name with `/`.
pub fn logical_payload_path(base_dir: &str, name: &str) -> String {
    let base = base_dir.trim_end_matches('/');
    if base.is_empty() {
        name.to_string()
    } else {
        format!("{base}/{name}")
    }
}

/// Resolves a logical payload path against a root directory.
pub fn resolve_payload_path(root: &Path, payload_path: &str) -> PathBuf {
    let p = Path::new(payload_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Writes the canonical lines sorted by byte value, LF-terminated.
///
/// `canon` must already be deduplicated. Rewriting identical content is a
/// no-op; different content at the same path is an `ExistsConflict`.
pub fn write_payload(
    root: &Path,
    base_dir: &str,
    key: &WindowKey,
    canon: &[CanonicalRecord],
) -> Result<PayloadFile, CheckpointError> {
    let path = logical_payload_path(base_dir, &payload_file_name(key)?);
    let fs_path = resolve_payload_path(root, &path);
    let mut lines: Vec<String> = canon.iter().map(|c| c.as_str().to_string()).collect();
    lines.sort_unstable_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
    let mut bytes = Vec::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for l in &lines {
        bytes.extend_from_slice(l.as_bytes());
        bytes.push(b'\n');
    }
    match fs::read(&fs_path) {
        Ok(existing) if existing == bytes => {}
        Ok(_) => return Err(CheckpointError::ExistsConflict(fs_path)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            ndjson::write_atomic(&fs_path, &bytes).map_err(io_err(&fs_path))?;
        }
        Err(e) => return Err(io_err(&fs_path)(e)),
    }
    Ok(PayloadFile { path, fs_path, lines })
}

/// SHA-256 of the payload file's exact bytes.
pub fn payload_hash(fs_path: &Path) -> Result<Digest, CheckpointError> {
    let bytes = fs::read(fs_path).map_err(io_err(fs_path))?;
    Ok(merkle::leaf_hash(&bytes))
}

/// Populates every checkpoint field for a written window.
///
/// `offsets` is the (min, max) per-source counter of the surviving records.
pub fn build_checkpoint(
    key: &WindowKey,
    canon: &[CanonicalRecord],
    offsets: (u64, u64),
    payload: &PayloadFile,
    stream_name: &str,
    policy: EmptyWindowPolicy,
) -> Result<Checkpoint, CheckpointError> {
    let window_id = windowing::window_id(key)?;
    let root = match merkle::merkle_root(canon) {
        Some(root) => root,
        None if policy == EmptyWindowPolicy::Anchor => empty_window_root(),
        None => return Err(CheckpointError::EmptyWindow(window_id)),
    };
    let cp = Checkpoint {
        blockchain_stream: stream_name.to_string(),
        merkle_root: root,
        offset_end: offsets.1,
        offset_start: offsets.0,
        payload_path: payload.path.clone(),
        payload_sha256: payload_hash(&payload.fs_path)?,
        record_count: canon.len() as u64,
        source_stream: key.source_stream.clone(),
        window_end: key.end_iso()?,
        window_id,
        window_start: key.start_iso()?,
    };
    cp.validate()?;
    Ok(cp)
}

/// One line of `checkpoints.ndjson`: a checkpoint annotated with the
/// transaction that anchored it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MirrorEntry {
    pub anchored_at: String,
    pub checkpoint: Checkpoint,
    /// Informational description of the execution environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<Value>,
    pub txid: String,
}

impl MirrorEntry {
    pub fn to_line(&self) -> String {
        let value = serde_json::to_value(self).expect("mirror entry serializes");
        canonical::to_canonical_json(&value).expect("mirror entry has no floats")
    }
}

/// The off-chain checkpoint log.
#[derive(Debug)]
pub struct MirrorLog {
    log: AppendLog,
}

impl MirrorLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CheckpointError> {
        Ok(MirrorLog {
            log: AppendLog::open(path)?,
        })
    }

    pub fn append(&self, entry: &MirrorEntry) -> Result<(), CheckpointError> {
        Ok(self.log.append(&entry.to_line())?)
    }

    pub fn path(&self) -> &Path {
        self.log.path()
    }

    pub fn read(path: &Path) -> Result<Vec<MirrorEntry>, CheckpointError> {
        Ok(ndjson::read_values_or_empty(path)?)
    }

    /// Latest entry for `window_id` on `stream`.
    pub fn find(path: &Path, window_id: &str, stream: &str) -> Result<Option<MirrorEntry>, CheckpointError> {
        Ok(MirrorLog::read(path)?
            .into_iter()
            .rev()
            .find(|e| e.checkpoint.window_id == window_id && e.checkpoint.blockchain_stream == stream))
    }
}
