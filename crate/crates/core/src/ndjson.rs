//! Newline-delimited JSON helpers: line readers with line numbers, a
//! serialized appender for logs, and atomic whole-file writes.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NdjsonError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl NdjsonError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        NdjsonError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Reads non-empty lines with their 1-based line numbers. A trailing `\r`
/// is kept, so CRLF input is visible to callers that care about bytes.
pub fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, NdjsonError> {
    let file = File::open(path).map_err(|e| NdjsonError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| NdjsonError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Parses every non-empty line as `T`.
pub fn read_values<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, NdjsonError> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|e| NdjsonError::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Like [`read_values`] but a missing file reads as empty.
pub fn read_values_or_empty<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, NdjsonError> {
    if path.exists() {
        read_values(path)
    } else {
        Ok(Vec::new())
    }
}

/// Append-only line log. Appends from several threads are serialized.
#[derive(Debug)]
pub struct AppendLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl AppendLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, NdjsonError> {
        let path = path.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| NdjsonError::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| NdjsonError::io(&path, e))?;
        Ok(AppendLog {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes `line` plus `\n` and flushes.
    pub fn append(&self, line: &str) -> Result<(), NdjsonError> {
        debug_assert!(!line.contains('\n'));
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        f.write_all(&buf)
            .and_then(|_| f.flush())
            .map_err(|e| NdjsonError::io(&self.path, e))
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(
        ".{name}.tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
