//! UTC second-precision timestamp rendering shared by the canonical form,
//! window identifiers and checkpoints.

use chrono::{DateTime, Datelike, NaiveDateTime};

/// Earliest instant renderable with a four-digit year (0000-01-01T00:00:00Z).
pub const MIN_EPOCH: i64 = -62_167_219_200;
/// Latest instant renderable with a four-digit year (9999-12-31T23:59:59Z).
pub const MAX_EPOCH: i64 = 253_402_300_799;

/// Renders seconds since the Unix epoch as `YYYY-MM-DDTHH:MM:SSZ`.
///
/// Returns `None` outside the four-digit-year range.
pub fn format_utc(epoch_seconds: i64) -> Option<String> {
    if !(MIN_EPOCH..=MAX_EPOCH).contains(&epoch_seconds) {
        return None;
    }
    let dt = DateTime::from_timestamp(epoch_seconds, 0)?;
    Some(dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
}

/// Parses an RFC 3339 timestamp with any offset and any fractional part,
/// returning whole seconds since the epoch (fractions are floored).
pub fn parse_rfc3339(text: &str) -> Option<i64> {
    let dt = DateTime::parse_from_rfc3339(text.trim()).ok()?;
    let secs = dt.timestamp();
    (MIN_EPOCH..=MAX_EPOCH).contains(&secs).then_some(secs)
}

/// Strict parser for the exact rendering produced by [`format_utc`].
pub fn parse_utc_strict(text: &str) -> Option<i64> {
    if text.len() != 20 || !text.ends_with('Z') {
        return None;
    }
    let naive = NaiveDateTime::parse_from_str(&text[..19], "%Y-%m-%dT%H:%M:%S").ok()?;
    if naive.year() < 0 {
        return None;
    }
    let secs = naive.and_utc().timestamp();
    (format_utc(secs).as_deref() == Some(text)).then_some(secs)
}

/// Rendering used inside payload file names, where `:` is replaced by `_`.
pub fn format_utc_filename(epoch_seconds: i64) -> Option<String> {
    format_utc(epoch_seconds).map(|s| s.replace(':', "_"))
}
