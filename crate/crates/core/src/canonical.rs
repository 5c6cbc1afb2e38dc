//! Canonical JSON for stream records.
//!
//! A record's canonical form `C(r)` is a compact JSON object with:
//!
//! - transport metadata and configured exclusion fields removed,
//! - timestamp fields rendered as UTC `YYYY-MM-DDTHH:MM:SSZ`,
//! - object keys sorted by raw UTF-8 byte order at every level,
//! - numbers in a single shortest round-trip decimal rendering,
//! - no whitespace between tokens.
//!
//! Two records that differ only in excluded fields or key order map to the
//! same bytes, which is what makes window roots reproducible across runs.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde_json::{Map, Number, Value};
use thiserror::Error;

use crate::utc;

/// Key holding the station identifier.
pub const SOURCE_KEY: &str = "sourceStream";
/// Key holding the event time.
pub const TIMESTAMP_KEY: &str = "timestamp";
/// Key holding the temperature reading.
pub const TEMPERATURE_KEY: &str = "temperature";
/// Key holding transport metadata; never part of the canonical form.
pub const INGEST_META_KEY: &str = "ingestMeta";
/// Key inside `ingestMeta` carrying the per-source offset counter.
pub const OFFSET_META_KEY: &str = "offset";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanonicalError {
    #[error("non-finite number in field `{0}`")]
    NonFiniteNumber(String),
    #[error("invalid timestamp in field `{field}`: {value}")]
    InvalidTimestamp { field: String, value: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("malformed JSON: {0}")]
    Json(String),
}

/// One observation as ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub source_stream: String,
    /// Event time in whole seconds since the Unix epoch (UTC).
    pub event_time: i64,
    /// Degrees Celsius.
    pub temperature: f64,
    /// Additional named fields, canonicalized recursively.
    pub extras: BTreeMap<String, Value>,
    /// Transport metadata (arrival time, partition, offset); excluded from `C(r)`.
    pub ingest_meta: Option<BTreeMap<String, Value>>,
}

impl Record {
    pub fn new(source_stream: impl Into<String>, event_time: i64, temperature: f64) -> Self {
        Record {
            source_stream: source_stream.into(),
            event_time,
            temperature,
            extras: BTreeMap::new(),
            ingest_meta: None,
        }
    }

    pub fn with_extra(mut self, key: impl Into<String>, value: Value) -> Self {
        self.extras.insert(key.into(), value);
        self
    }

    /// Per-source offset counter stored in the ingest metadata, if any.
    pub fn offset(&self) -> Option<u64> {
        self.ingest_meta
            .as_ref()
            .and_then(|m| m.get(OFFSET_META_KEY))
            .and_then(Value::as_u64)
    }

    pub fn set_offset(&mut self, offset: u64) {
        self.ingest_meta
            .get_or_insert_with(BTreeMap::new)
            .insert(OFFSET_META_KEY.to_string(), Value::from(offset));
    }

    /// Builds a record from a JSON object.
    ///
    /// `timestamp` may be an RFC 3339 string or integer epoch seconds.
    /// Every key other than the three core fields and `ingestMeta` goes to
    /// `extras`.
    pub fn from_json(value: &Value) -> Result<Record, CanonicalError> {
        let obj = value
            .as_object()
            .ok_or_else(|| CanonicalError::InvalidRecord("record is not a JSON object".into()))?;
        let source_stream = obj
            .get(SOURCE_KEY)
            .and_then(Value::as_str)
            .ok_or_else(|| CanonicalError::InvalidRecord(format!("missing string `{SOURCE_KEY}`")))?
            .to_string();
        if source_stream.is_empty() {
            return Err(CanonicalError::InvalidRecord(format!("empty `{SOURCE_KEY}`")));
        }
        let ts = obj
            .get(TIMESTAMP_KEY)
            .ok_or_else(|| CanonicalError::InvalidRecord(format!("missing `{TIMESTAMP_KEY}`")))?;
        let event_time = timestamp_seconds(TIMESTAMP_KEY, ts)?;
        let temperature = obj
            .get(TEMPERATURE_KEY)
            .and_then(Value::as_f64)
            .ok_or_else(|| {
                CanonicalError::InvalidRecord(format!("missing numeric `{TEMPERATURE_KEY}`"))
            })?;
        let ingest_meta = match obj.get(INGEST_META_KEY) {
            None | Some(Value::Null) => None,
            Some(Value::Object(m)) => Some(m.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
            Some(_) => {
                return Err(CanonicalError::InvalidRecord(format!(
                    "`{INGEST_META_KEY}` must be an object"
                )))
            }
        };
        let extras = obj
            .iter()
            .filter(|(k, _)| {
                !matches!(
                    k.as_str(),
                    SOURCE_KEY | TIMESTAMP_KEY | TEMPERATURE_KEY | INGEST_META_KEY
                )
            })
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(Record {
            source_stream,
            event_time,
            temperature,
            extras,
            ingest_meta,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Record, CanonicalError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| CanonicalError::Json(e.to_string()))?;
        Record::from_json(&value)
    }

    /// JSON object view of the record including `ingestMeta`.
    pub fn to_json(&self) -> Result<Value, CanonicalError> {
        let mut obj = Map::new();
        for (k, v) in &self.extras {
            obj.insert(k.clone(), v.clone());
        }
        obj.insert(SOURCE_KEY.into(), Value::String(self.source_stream.clone()));
        let ts = utc::format_utc(self.event_time).ok_or_else(|| CanonicalError::InvalidTimestamp {
            field: TIMESTAMP_KEY.into(),
            value: self.event_time.to_string(),
        })?;
        obj.insert(TIMESTAMP_KEY.into(), Value::String(ts));
        let temp = Number::from_f64(self.temperature)
            .ok_or_else(|| CanonicalError::NonFiniteNumber(TEMPERATURE_KEY.into()))?;
        obj.insert(TEMPERATURE_KEY.into(), Value::Number(temp));
        if let Some(meta) = &self.ingest_meta {
            obj.insert(
                INGEST_META_KEY.into(),
                Value::Object(meta.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
            );
        }
        Ok(Value::Object(obj))
    }
}

/// Canonical serialization of one record.
#[derive(Debug, Clone)]
pub struct CanonicalRecord {
    bytes: Vec<u8>,
    origin: Option<u64>,
}

impl CanonicalRecord {
    /// Wraps bytes already in canonical form (e.g. a payload line).
    pub fn from_canonical_bytes(bytes: Vec<u8>) -> Self {
        CanonicalRecord { bytes, origin: None }
    }

    pub fn with_origin(mut self, origin: Option<u64>) -> Self {
        self.origin = origin;
        self
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn as_str(&self) -> &str {
        // Constructed only from `String` output or validated payload lines.
        std::str::from_utf8(&self.bytes).unwrap_or("")
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    /// Offset counter of the originating record, when known.
    pub fn origin(&self) -> Option<u64> {
        self.origin
    }
}

impl PartialEq for CanonicalRecord {
    fn eq(&self, other: &Self) -> bool {
        self.bytes == other.bytes
    }
}

impl Eq for CanonicalRecord {}

impl AsRef<[u8]> for CanonicalRecord {
    fn as_ref(&self) -> &[u8] {
        &self.bytes
    }
}

/// Which fields are dropped and which are treated as timestamps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalConfig {
    exclude: BTreeSet<String>,
    timestamps: BTreeSet<String>,
}

/// Transport metadata names dropped from every record.
pub const DEFAULT_EXCLUDED: &[&str] = &[INGEST_META_KEY, "arrivalTime", "partition", "offset"];

impl Default for CanonicalConfig {
    fn default() -> Self {
        CanonicalConfig {
            exclude: DEFAULT_EXCLUDED.iter().map(|s| s.to_string()).collect(),
            timestamps: [TIMESTAMP_KEY.to_string()].into_iter().collect(),
        }
    }
}

impl CanonicalConfig {
    /// Adds configured names to the default exclusion and timestamp sets.
    pub fn new<I, J, S, T>(exclude_fields: I, timestamp_fields: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut cfg = CanonicalConfig::default();
        cfg.exclude.extend(exclude_fields.into_iter().map(Into::into));
        cfg.timestamps.extend(timestamp_fields.into_iter().map(Into::into));
        // Core fields can never be excluded.
        for core in [SOURCE_KEY, TIMESTAMP_KEY, TEMPERATURE_KEY] {
            cfg.exclude.remove(core);
        }
        cfg
    }

    pub fn is_excluded(&self, key: &str) -> bool {
        self.exclude.contains(key)
    }

    pub fn is_timestamp(&self, key: &str) -> bool {
        self.timestamps.contains(key)
    }
}

/// Canonicalizes a record.
pub fn canonicalize(record: &Record, cfg: &CanonicalConfig) -> Result<CanonicalRecord, CanonicalError> {
    if record.source_stream.is_empty() {
        return Err(CanonicalError::InvalidRecord(format!("empty `{SOURCE_KEY}`")));
    }
    if !record.temperature.is_finite() {
        return Err(CanonicalError::NonFiniteNumber(TEMPERATURE_KEY.into()));
    }
    let value = record.to_json()?;
    let bytes = canonicalize_value(&value, cfg)?;
    Ok(CanonicalRecord {
        bytes: bytes.into_bytes(),
        origin: record.offset(),
    })
}

/// Canonicalizes an arbitrary JSON object under the record rules
/// (exclusions and timestamp normalization apply to top-level keys).
pub fn canonicalize_value(value: &Value, cfg: &CanonicalConfig) -> Result<String, CanonicalError> {
    let obj = value
        .as_object()
        .ok_or_else(|| CanonicalError::InvalidRecord("record is not a JSON object".into()))?;
    let mut fields: Vec<(&str, Value)> = Vec::with_capacity(obj.len());
    for (k, v) in obj {
        if cfg.is_excluded(k) {
            continue;
        }
        let v = if cfg.is_timestamp(k) {
            Value::String(normalize_timestamp(k, v)?)
        } else {
            v.clone()
        };
        fields.push((k.as_str(), v));
    }
    fields.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
    let mut out = String::with_capacity(128);
    out.push('{');
    for (i, (k, v)) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_string(&mut out, k);
        out.push(':');
        write_value(&mut out, v)?;
    }
    out.push('}');
    Ok(out)
}

/// Canonicalizes a payload line: parse, apply record rules, reserialize.
pub fn canonicalize_str(text: &str, cfg: &CanonicalConfig) -> Result<String, CanonicalError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CanonicalError::Json(e.to_string()))?;
    canonicalize_value(&value, cfg)
}

/// Plain canonical JSON: sorted keys, canonical numbers, no whitespace.
/// No fields are dropped and strings are left untouched.
pub fn to_canonical_json(value: &Value) -> Result<String, CanonicalError> {
    let mut out = String::new();
    write_value(&mut out, value)?;
    Ok(out)
}

fn write_value(out: &mut String, value: &Value) -> Result<(), CanonicalError> {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&format_json_number(n)?),
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(out, k);
                out.push(':');
                write_value(out, &map[k])?;
            }
            out.push('}');
        }
    }
    Ok(())
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{08}' => out.push_str("\\b"),
            '\u{0c}' => out.push_str("\\f"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn format_json_number(n: &Number) -> Result<String, CanonicalError> {
    if let Some(i) = n.as_i64() {
        return Ok(i.to_string());
    }
    if let Some(u) = n.as_u64() {
        return Ok(u.to_string());
    }
    let f = n
        .as_f64()
        .ok_or_else(|| CanonicalError::NonFiniteNumber(n.to_string()))?;
    format_number(f).ok_or_else(|| CanonicalError::NonFiniteNumber(n.to_string()))
}

/// Canonical rendering of a finite `f64`: the shortest decimal that
/// round-trips, in plain notation for magnitudes in `[1e-6, 1e21)` and
/// with a lowercase `e` exponent otherwise. Zero (including `-0`) is `0`.
pub fn format_number(f: f64) -> Option<String> {
    if !f.is_finite() {
        return None;
    }
    if f == 0.0 {
        return Some("0".into());
    }
    let mag = f.abs();
    if (1e-6..1e21).contains(&mag) {
        Some(format!("{f}"))
    } else {
        Some(format!("{f:e}"))
    }
}

fn timestamp_seconds(field: &str, value: &Value) -> Result<i64, CanonicalError> {
    let invalid = || CanonicalError::InvalidTimestamp {
        field: field.to_string(),
        value: value.to_string(),
    };
    let secs = match value {
        Value::String(s) => utc::parse_rfc3339(s).ok_or_else(invalid)?,
        Value::Number(n) => n.as_i64().ok_or_else(invalid)?,
        _ => return Err(invalid()),
    };
    if utc::format_utc(secs).is_none() {
        return Err(invalid());
    }
    Ok(secs)
}

fn normalize_timestamp(field: &str, value: &Value) -> Result<String, CanonicalError> {
    let secs = timestamp_seconds(field, value)?;
    utc::format_utc(secs).ok_or_else(|| CanonicalError::InvalidTimestamp {
        field: field.to_string(),
        value: value.to_string(),
    })
}

/// Removes exact-byte duplicates, keeping the first occurrence and the
/// relative order of survivors.
pub fn dedupe(records: Vec<CanonicalRecord>) -> Vec<CanonicalRecord> {
    let mut seen: HashSet<Vec<u8>> = HashSet::with_capacity(records.len());
    records
        .into_iter()
        .filter(|r| seen.insert(r.bytes.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    /// Independent reference: collect object entries, sort keys, serialize
    /// leaves through serde_json. Only valid for inputs without floats.
    fn oracle(value: &Value) -> String {
        match value {
            Value::Object(map) => {
                let mut entries: Vec<(&String, &Value)> = map.iter().collect();
                entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
                let body: Vec<String> = entries
                    .into_iter()
                    .map(|(k, v)| format!("{}:{}", serde_json::to_string(k).unwrap(), oracle(v)))
                    .collect();
                format!("{{{}}}", body.join(","))
            }
            Value::Array(items) => {
                format!("[{}]", items.iter().map(oracle).collect::<Vec<_>>().join(","))
            }
            leaf => serde_json::to_string(leaf).unwrap(),
        }
    }

    #[test]
    fn epoch_origin_record() {
        let r = Record::new("S", 0, 0.0);
        let c = canonicalize(&r, &CanonicalConfig::default()).unwrap();
        assert_eq!(
            c.as_str(),
            r#"{"sourceStream":"S","temperature":0,"timestamp":"1970-01-01T00:00:00Z"}"#
        );
    }

    #[test]
    fn supplied_key_order_is_irrelevant() {
        let text = r#"{"temperature":0,"timestamp":"1970-01-01T00:00:00Z","sourceStream":"S"}"#;
        let cfg = CanonicalConfig::default();
        let got = canonicalize_str(text, &cfg).unwrap();
        let value: Value = serde_json::from_str(text).unwrap();
        assert_eq!(got, oracle(&value));
        assert_eq!(
            got,
            r#"{"sourceStream":"S","temperature":0,"timestamp":"1970-01-01T00:00:00Z"}"#
        );
    }

    #[test]
    fn reference_vectors() {
        // Vectors where UTF-8 byte order and UTF-16 order agree.
        let cases = [
            (json!({"b": 2, "a": 1}), r#"{"a":1,"b":2}"#),
            (json!({"a": {"z": [3, {"y": 1, "x": 2}], "m": null}}), r#"{"a":{"m":null,"z":[3,{"x":2,"y":1}]}}"#),
            (json!({"\r": 1, "1": 2, "A": 3, "a": 4, "é": 5}), "{\"\\r\":1,\"1\":2,\"A\":3,\"a\":4,\"é\":5}"),
            (json!({"s": "line\nbreak \"q\" \\"}), r#"{"s":"line\nbreak \"q\" \\"}"#),
            (json!([true, false, null, "", -5]), r#"[true,false,null,"",-5]"#),
        ];
        for (input, expected) in cases {
            assert_eq!(to_canonical_json(&input).unwrap(), expected);
            assert_eq!(oracle(&input), expected);
        }
    }

    #[test]
    fn ingest_meta_is_excluded() {
        let cfg = CanonicalConfig::default();
        let mut a = Record::new("S", 100, 1.5);
        let mut b = a.clone();
        a.ingest_meta = Some([("arrival".to_string(), json!("2025-01-01T00:00:00Z"))].into());
        b.ingest_meta = Some([("arrival".to_string(), json!("2030-01-01T00:00:00Z"))].into());
        b.set_offset(99);
        assert_eq!(canonicalize(&a, &cfg).unwrap(), canonicalize(&b, &cfg).unwrap());
    }

    #[test]
    fn configured_exclusions_and_timestamps() {
        let cfg = CanonicalConfig::new(["receivedBy"], ["observedAt"]);
        let text = r#"{"sourceStream":"S","timestamp":"2025-12-02T19:00:00+01:00","temperature":1.25,"receivedBy":"node-7","observedAt":0}"#;
        assert_eq!(
            canonicalize_str(text, &cfg).unwrap(),
            r#"{"observedAt":"1970-01-01T00:00:00Z","sourceStream":"S","temperature":1.25,"timestamp":"2025-12-02T18:00:00Z"}"#
        );
        // Core fields cannot be excluded.
        let cfg = CanonicalConfig::new([TEMPERATURE_KEY], Vec::<String>::new());
        assert!(canonicalize_str(text, &cfg).unwrap().contains("temperature"));
    }

    #[test]
    fn non_finite_rejected() {
        let cfg = CanonicalConfig::default();
        for t in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            let r = Record::new("S", 0, t);
            assert!(matches!(canonicalize(&r, &cfg), Err(CanonicalError::NonFiniteNumber(_))));
        }
    }

    #[test]
    fn invalid_timestamps_rejected() {
        let cfg = CanonicalConfig::default();
        let r = Record::new("S", utc::MAX_EPOCH + 1, 0.0);
        assert!(matches!(canonicalize(&r, &cfg), Err(CanonicalError::InvalidTimestamp { .. })));
        let text = r#"{"sourceStream":"S","timestamp":"yesterday","temperature":1}"#;
        assert!(matches!(canonicalize_str(text, &cfg), Err(CanonicalError::InvalidTimestamp { .. })));
        let text = r#"{"sourceStream":"S","timestamp":true,"temperature":1}"#;
        assert!(matches!(canonicalize_str(text, &cfg), Err(CanonicalError::InvalidTimestamp { .. })));
    }

    #[test]
    fn record_parse_errors() {
        assert!(Record::from_json_str("[]").is_err());
        assert!(Record::from_json_str(r#"{"sourceStream":"","timestamp":0,"temperature":1}"#).is_err());
        assert!(Record::from_json_str(r#"{"sourceStream":"S","timestamp":0}"#).is_err());
        assert!(Record::from_json_str(r#"{"sourceStream":"S","temperature":1}"#).is_err());
        assert!(Record::from_json_str(r#"{"sourceStream":"S","timestamp":0,"temperature":1,"ingestMeta":3}"#).is_err());
        assert!(Record::from_json_str("{").is_err());
    }

    #[test]
    fn number_rendering() {
        let cases: [(f64, &str); 12] = [
            (0.0, "0"),
            (-0.0, "0"),
            (21.0, "21"),
            (22.4, "22.4"),
            (-3.5, "-3.5"),
            (0.1 + 0.2, "0.30000000000000004"),
            (1e-6, "0.000001"),
            (1e-7, "1e-7"),
            (1.5e-7, "1.5e-7"),
            (1e20, "100000000000000000000"),
            (1e21, "1e21"),
            (-2.5e300, "-2.5e300"),
        ];
        for (f, s) in cases {
            assert_eq!(format_number(f).unwrap(), s, "{f:?}");
            // round trip
            assert_eq!(s.parse::<f64>().unwrap(), if f == 0.0 { 0.0 } else { f });
        }
        assert!(format_number(f64::NAN).is_none());
    }

    #[test]
    fn dedupe_examples() {
        let c = |s: &str| CanonicalRecord::from_canonical_bytes(s.as_bytes().to_vec());
        assert!(dedupe(vec![]).is_empty());
        assert_eq!(dedupe(vec![c("a"), c("a"), c("b")]), vec![c("a"), c("b")]);

        let input = vec![c("{\"x\":1}"), c("{\"x\":2}"), c("{\"x\":1}"), c("{\"x\":3}")];
        // Brute-force pairwise oracle: keep i iff no j < i has equal bytes.
        let expected: Vec<CanonicalRecord> = input
            .iter()
            .enumerate()
            .filter(|(i, r)| !input[..*i].iter().any(|p| p.as_bytes() == r.as_bytes()))
            .map(|(_, r)| r.clone())
            .collect();
        let got = dedupe(input);
        assert_eq!(got.len(), 3);
        assert_eq!(got, expected);
    }

    #[test]
    fn dedupe_keeps_first_origin() {
        let a = CanonicalRecord::from_canonical_bytes(b"a".to_vec()).with_origin(Some(1));
        let b = CanonicalRecord::from_canonical_bytes(b"a".to_vec()).with_origin(Some(2));
        let out = dedupe(vec![a, b]);
        assert_eq!(out[0].origin(), Some(1));
    }

    fn arb_scalar() -> impl Strategy<Value = Value> {
        prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            any::<i64>().prop_map(Value::from),
            (-1e6f64..1e6).prop_map(Value::from),
            any::<f64>()
                .prop_filter("finite", |f| f.is_finite())
                .prop_map(Value::from),
            "[a-zA-Z0-9 _\\-é\n\"\\\\]{0,12}".prop_map(Value::String),
        ]
    }

    fn arb_json() -> impl Strategy<Value = Value> {
        arb_scalar().prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
                prop::collection::btree_map("[a-zA-Zé_]{1,6}", inner, 0..4)
                    .prop_map(|m| Value::Object(m.into_iter().collect())),
            ]
        })
    }

    fn arb_record() -> impl Strategy<Value = Record> {
        (
            "[A-Za-z][A-Za-z \\-]{0,15}",
            utc::MIN_EPOCH..=utc::MAX_EPOCH,
            any::<f64>().prop_filter("finite", |f| f.is_finite()),
            prop::collection::btree_map("[a-z]{2,8}", arb_json(), 0..4),
        )
            .prop_map(|(s, t, temp, extras)| {
                let mut r = Record::new(s, t, temp);
                r.extras = extras
                    .into_iter()
                    .filter(|(k, _)| !DEFAULT_EXCLUDED.contains(&k.as_str()))
                    .collect();
                r
            })
    }

    proptest! {
        #[test]
        fn idempotent(r in arb_record()) {
            let cfg = CanonicalConfig::default();
            let c = canonicalize(&r, &cfg).unwrap();
            let again = canonicalize_str(c.as_str(), &cfg).unwrap();
            prop_assert_eq!(c.as_str(), again.as_str());
            let reparsed = Record::from_json_str(c.as_str()).unwrap();
            prop_assert_eq!(canonicalize(&reparsed, &cfg).unwrap(), c);
        }

        #[test]
        fn key_order_invariant(r in arb_record(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let cfg = CanonicalConfig::default();
            let value = r.to_json().unwrap();
            let obj = value.as_object().unwrap();
            let mut entries: Vec<(String, Value)> = obj.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            entries.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let mut text = String::from("{");
            for (i, (k, v)) in entries.iter().enumerate() {
                if i > 0 { text.push_str(", "); }
                text.push_str(&format!("{} : {}", serde_json::to_string(k).unwrap(), serde_json::to_string(v).unwrap()));
            }
            text.push('}');
            let expected = canonicalize(&r, &cfg).unwrap();
            prop_assert_eq!(canonicalize_str(&text, &cfg).unwrap(), expected.as_str());
        }

        #[test]
        fn exclusion_invariant(r in arb_record(), arrival in any::<i64>(), part in 0u32..64) {
            let cfg = CanonicalConfig::default();
            let mut other = r.clone();
            other.ingest_meta = Some([("arrival".to_string(), json!(arrival)), ("partition".to_string(), json!(part))].into());
            prop_assert_eq!(canonicalize(&r, &cfg).unwrap(), canonicalize(&other, &cfg).unwrap());
        }

        #[test]
        fn canonical_bytes_are_sorted_and_compact(v in arb_json()) {
            let text = to_canonical_json(&v).unwrap();
            let parsed: Value = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(to_canonical_json(&parsed).unwrap(), text.clone());
            fn check(v: &Value) -> bool {
                match v {
                    Value::Object(m) => {
                        let keys: Vec<&String> = m.keys().collect();
                        keys.windows(2).all(|w| w[0].as_bytes() < w[1].as_bytes()) && m.values().all(check)
                    }
                    Value::Array(a) => a.iter().all(check),
                    _ => true,
                }
            }
            prop_assert!(check(&parsed));
        }

        #[test]
        fn dedupe_idempotent(xs in prop::collection::vec("[ab]{0,2}", 0..12)) {
            let recs: Vec<CanonicalRecord> = xs.iter().map(|s| CanonicalRecord::from_canonical_bytes(s.as_bytes().to_vec())).collect();
            let once = dedupe(recs.clone());
            prop_assert!(once.len() <= recs.len());
            prop_assert_eq!(dedupe(once.clone()), once);
        }
    }
}
