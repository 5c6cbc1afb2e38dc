//! Epoch-aligned tumbling windows keyed by event time.
//!
//! Window `w` covers the half-open interval `[w·Δ, (w+1)·Δ)` in seconds
//! since the Unix epoch, so membership depends only on the event timestamp
//! and never on arrival order.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::Record;
use crate::utc;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WindowError {
    #[error("window duration must be positive")]
    ZeroDuration,
    #[error("malformed window id: {0}")]
    MalformedId(String),
    #[error("window bounds fall outside the renderable time range")]
    OutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WindowSpec {
    duration_seconds: i64,
    grace_seconds: i64,
}

impl WindowSpec {
    pub fn new(duration_seconds: u32, grace_seconds: u32) -> Result<Self, WindowError> {
        if duration_seconds == 0 {
            return Err(WindowError::ZeroDuration);
        }
        Ok(WindowSpec {
            duration_seconds: i64::from(duration_seconds),
            grace_seconds: i64::from(grace_seconds),
        })
    }

    pub fn duration_seconds(&self) -> i64 {
        self.duration_seconds
    }

    pub fn grace_seconds(&self) -> i64 {
        self.grace_seconds
    }

    /// `⌊t / Δ⌋` with flooring toward negative infinity.
    pub fn index_of(&self, t: i64) -> i64 {
        t.div_euclid(self.duration_seconds)
    }

    pub fn key(&self, source_stream: impl Into<String>, index: i64) -> WindowKey {
        let start = index * self.duration_seconds;
        WindowKey {
            source_stream: source_stream.into(),
            index,
            start_epoch: start,
            end_epoch: start + self.duration_seconds,
        }
    }

    /// Whether an event-time watermark has passed the window's close point.
    pub fn is_closable(&self, key: &WindowKey, watermark: i64) -> bool {
        watermark >= key.end_epoch + self.grace_seconds
    }
}

/// Free-function form of [`WindowSpec::index_of`].
pub fn window_index(t: i64, spec: &WindowSpec) -> i64 {
    spec.index_of(t)
}

/// Identity of one window of one source (or of the merged region view).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WindowKey {
    pub source_stream: String,
    pub index: i64,
    pub start_epoch: i64,
    pub end_epoch: i64,
}

impl WindowKey {
    pub fn duration(&self) -> i64 {
        self.end_epoch - self.start_epoch
    }

    pub fn contains(&self, t: i64) -> bool {
        self.start_epoch <= t && t < self.end_epoch
    }

    pub fn start_iso(&self) -> Result<String, WindowError> {
        utc::format_utc(self.start_epoch).ok_or(WindowError::OutOfRange)
    }

    pub fn end_iso(&self) -> Result<String, WindowError> {
        utc::format_utc(self.end_epoch).ok_or(WindowError::OutOfRange)
    }

    /// `<sourceStream>:<startISO>_<endISO>`.
    pub fn window_id(&self) -> Result<String, WindowError> {
        Ok(format!(
            "{}:{}_{}",
            self.source_stream,
            self.start_iso()?,
            self.end_iso()?
        ))
    }

    /// Same key under a different source label (used for region windows).
    pub fn relabel(&self, source_stream: impl Into<String>) -> WindowKey {
        WindowKey {
            source_stream: source_stream.into(),
            ..self.clone()
        }
    }

    /// Builds a key from explicit bounds; the index is `start / duration`.
    pub fn from_bounds(
        source_stream: impl Into<String>,
        start_epoch: i64,
        end_epoch: i64,
    ) -> Result<WindowKey, WindowError> {
        let duration = end_epoch - start_epoch;
        if duration <= 0 {
            return Err(WindowError::ZeroDuration);
        }
        Ok(WindowKey {
            source_stream: source_stream.into(),
            index: start_epoch.div_euclid(duration),
            start_epoch,
            end_epoch,
        })
    }
}

impl fmt::Display for WindowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.window_id() {
            Ok(id) => f.write_str(&id),
            Err(_) => write!(f, "{}:#{}", self.source_stream, self.index),
        }
    }
}

/// Renders a window id; see [`WindowKey::window_id`].
pub fn window_id(key: &WindowKey) -> Result<String, WindowError> {
    key.window_id()
}

/// Parsed components of a window id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedWindowId {
    pub source_stream: String,
    pub start_epoch: i64,
    pub end_epoch: i64,
}

impl ParsedWindowId {
    pub fn into_key(self) -> Result<WindowKey, WindowError> {
        WindowKey::from_bounds(self.source_stream, self.start_epoch, self.end_epoch)
    }
}

/// Parses `<sourceStream>:<startISO>_<endISO>`. The source may itself
/// contain colons; the split is at the last colon that is followed by a
/// valid timestamp pair.
pub fn parse_window_id(id: &str) -> Result<ParsedWindowId, WindowError> {
    let malformed = || WindowError::MalformedId(id.to_string());
    for (pos, _) in id.match_indices(':').collect::<Vec<_>>().into_iter().rev() {
        let (source, rest) = (&id[..pos], &id[pos + 1..]);
        let Some((start, end)) = rest.split_once('_') else {
            continue;
        };
        if let (Some(s), Some(e)) = (utc::parse_utc_strict(start), utc::parse_utc_strict(end)) {
            if source.is_empty() || e <= s {
                return Err(malformed());
            }
            return Ok(ParsedWindowId {
                source_stream: source.to_string(),
                start_epoch: s,
                end_epoch: e,
            });
        }
    }
    Err(malformed())
}

/// Window of the record's own source containing its event time.
pub fn assign(record: &Record, spec: &WindowSpec) -> WindowKey {
    spec.key(record.source_stream.clone(), spec.index_of(record.event_time))
}
