//! Independent window verification.
//!
//! The auditor only looks at the anchored checkpoint (ledger item, or the
//! mirror log as a fallback), the payload file, and the canonicalization and
//! hashing rules. It never consults pipeline state.
//!
//! Payload lines are expected in canonical form. A line that does not parse,
//! or that does not re-canonicalize to itself, makes the payload unreadable
//! and enters the tree as its raw bytes, so the recomputed root also fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::aggregate::{self, AggregateResult};
use crate::canonical::{self, CanonicalConfig, CanonicalError, Record};
use crate::checkpoint::{self, Checkpoint, MirrorLog};
use crate::config::ToolConfig;
use crate::ledger::Ledger;
use crate::merkle::{self, Digest, MerkleProof, MerkleTree};
use crate::ndjson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// Outcome of one check with the values compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub status: CheckStatus,
    pub expected: Option<Value>,
    pub actual: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn skipped() -> Check {
        Check {
            status: CheckStatus::Skipped,
            expected: None,
            actual: None,
            detail: None,
        }
    }

    fn compare<T: Serialize + PartialEq>(expected: T, actual: T) -> Check {
        Check {
            status: if expected == actual { CheckStatus::Pass } else { CheckStatus::Fail },
            expected: Some(json!(expected)),
            actual: Some(json!(actual)),
            detail: None,
        }
    }

    fn pass() -> Check {
        Check {
            status: CheckStatus::Pass,
            ..Check::skipped()
        }
    }

    fn fail(detail: impl Into<String>) -> Check {
        Check {
            status: CheckStatus::Fail,
            detail: Some(detail.into()),
            ..Check::skipped()
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Check {
        self.detail = Some(detail.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Checks {
    pub checkpoint_found: Check,
    pub payload_readable: Check,
    pub payload_hash_match: Check,
    pub count_match: Check,
    pub root_match: Check,
    pub aggregates_match: Check,
}

impl Checks {
    fn all_skipped() -> Checks {
        Checks {
            checkpoint_found: Check::skipped(),
            payload_readable: Check::skipped(),
            payload_hash_match: Check::skipped(),
            count_match: Check::skipped(),
            root_match: Check::skipped(),
            aggregates_match: Check::skipped(),
        }
    }

    /// (name, check) pairs in report order.
    pub fn iter(&self) -> [(&'static str, &Check); 6] {
        [
            ("checkpointFound", &self.checkpoint_found),
            ("payloadReadable", &self.payload_readable),
            ("payloadHashMatch", &self.payload_hash_match),
            ("countMatch", &self.count_match),
            ("rootMatch", &self.root_match),
            ("aggregatesMatch", &self.aggregates_match),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictStatus {
    Verified,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointSource {
    Ledger,
    Mirror,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditVerdict {
    pub window_id: String,
    pub stream: String,
    pub status: VerdictStatus,
    pub strict: bool,
    pub checkpoint_source: Option<CheckpointSource>,
    pub checks: Checks,
    pub notes: Vec<String>,
}

impl AuditVerdict {
    pub fn is_verified(&self) -> bool {
        self.status == VerdictStatus::Verified
    }

    /// Names of the failing checks.
    pub fn failing_checks(&self) -> Vec<&'static str> {
        self.checks.iter().into_iter().filter(|(_, c)| c.failed()).map(|(n, _)| n).collect()
    }
}

/// Where the verification time went, in nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Timing {
    pub record_count: u64,
    /// Parsing, canonicalizing and leaf-hashing the payload lines.
    pub canonicalize_nanos: u64,
    /// Building the tree from leaf digests.
    pub merkle_nanos: u64,
    /// Whole verification including lookup and file I/O.
    pub total_nanos: u64,
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("window {0} is unavailable: {1}")]
    WindowUnavailable(String, String),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MembershipStatus {
    Pass,
    Fail,
}

/// Result of a single-record membership audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordVerdict {
    pub window_id: String,
    pub status: MembershipStatus,
    pub leaf: Digest,
    pub merkle_root: Digest,
    pub proof: Option<MerkleProof>,
    pub folded_root: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WindowTiming {
    pub window_id: String,
    pub stream: String,
    #[serde(flatten)]
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StreamError {
    pub stream: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditSummary {
    pub total: u64,
    pub verified: u64,
    pub failed: u64,
    pub verdicts: Vec<AuditVerdict>,
    /// Per-window timings; excluded from the JSON report since they vary.
    #[serde(skip)]
    pub timings: Vec<WindowTiming>,
    pub errors: Vec<StreamError>,
}

impl AuditSummary {
    pub fn all_verified(&self) -> bool {
        self.failed == 0 && self.errors.is_empty()
    }
}

struct Lookup {
    checkpoint: Option<Checkpoint>,
    source: Option<CheckpointSource>,
    problem: Option<String>,
    notes: Vec<String>,
}

struct Payload {
    bytes: Vec<u8>,
    /// Per line: the bytes that enter the tree.
    leaves: Vec<Vec<u8>>,
    leaf_hashes: Vec<Digest>,
    /// Lines that parsed and were already canonical.
    canonical_lines: Vec<String>,
    problems: Vec<String>,
}

pub struct Auditor {
    ledger: Option<Arc<dyn Ledger>>,
    mirror_log: Option<PathBuf>,
    payload_root: PathBuf,
    canonical: CanonicalConfig,
    results: Option<PathBuf>,
    results_cache: OnceLock<Result<BTreeMap<String, AggregateResult>, String>>,
    strict: bool,
}

impl Auditor {
    /// Auditor resolving relative payload paths against `payload_root`.
    pub fn new(payload_root: impl Into<PathBuf>) -> Auditor {
        Auditor {
            ledger: None,
            mirror_log: None,
            payload_root: payload_root.into(),
            canonical: CanonicalConfig::default(),
            results: None,
            results_cache: OnceLock::new(),
            strict: false,
        }
    }

    /// Auditor over a configured deployment: its payload root, mirror log
    /// and canonicalization settings.
    pub fn from_config(cfg: &ToolConfig, ledger: Option<Arc<dyn Ledger>>) -> Auditor {
        let mut a = Auditor::new(cfg.root.clone())
            .with_mirror_log(cfg.checkpoint_log_path())
            .with_canonical(cfg.canonical_config());
        a.ledger = ledger;
        a
    }

    pub fn with_ledger(mut self, ledger: Arc<dyn Ledger>) -> Auditor {
        self.ledger = Some(ledger);
        self
    }

    pub fn with_mirror_log(mut self, path: impl Into<PathBuf>) -> Auditor {
        self.mirror_log = Some(path.into());
        self
    }

    pub fn with_canonical(mut self, cfg: CanonicalConfig) -> Auditor {
        self.canonical = cfg;
        self
    }

    /// Enables the aggregate check against a results file.
    pub fn with_results(mut self, path: impl Into<PathBuf>) -> Auditor {
        self.results = Some(path.into());
        self.results_cache = OnceLock::new();
        self
    }

    /// In strict mode any failing check fails the verdict.
    pub fn strict(mut self, strict: bool) -> Auditor {
        self.strict = strict;
        self
    }

    fn lookup(&self, window_id: &str, stream: Option<&str>) -> Lookup {
        let mut notes = Vec::new();
        let mut on_chain = None;
        match (&self.ledger, stream) {
            (Some(ledger), Some(stream)) => match ledger.find_by_key(stream, window_id) {
                Ok(Some(item)) => match Checkpoint::from_json_bytes(&item.value) {
                    Ok(cp) => on_chain = Some(cp),
                    Err(e) => {
                        return Lookup {
                            checkpoint: None,
                            source: Some(CheckpointSource::Ledger),
                            problem: Some(format!("ledger item {} is not a valid checkpoint: {e}", item.txid)),
                            notes,
                        }
                    }
                },
                Ok(None) => notes.push("no ledger item for this key; trying the mirror log".into()),
                Err(e) => notes.push(format!("ledger lookup failed ({e}); trying the mirror log")),
            },
            (Some(_), None) => notes.push("no stream given; using the mirror log".into()),
            (None, _) => {}
        }
        let mirrored = match &self.mirror_log {
            Some(path) => match MirrorLog::read(path) {
                Ok(entries) => entries
                    .into_iter()
                    .rev()
                    .find(|e| {
                        e.checkpoint.window_id == window_id
                            && stream.is_none_or(|s| e.checkpoint.blockchain_stream == s)
                    })
                    .map(|e| e.checkpoint),
                Err(e) => {
                    notes.push(format!("mirror log unreadable: {e}"));
                    None
                }
            },
            None => None,
        };
        let (checkpoint, source) = match (on_chain, mirrored) {
            (Some(chain), Some(mirror)) => {
                if chain != mirror {
                    notes.push("ledger and mirror log disagree; the ledger item is used".into());
                }
                (Some(chain), Some(CheckpointSource::Ledger))
            }
            (Some(chain), None) => (Some(chain), Some(CheckpointSource::Ledger)),
            (None, Some(mirror)) => (Some(mirror), Some(CheckpointSource::Mirror)),
            (None, None) => (None, None),
        };
        let problem = match &checkpoint {
            None => Some("no evidence for this window".to_string()),
            Some(cp) if cp.window_id != window_id => {
                Some(format!("item keyed {window_id} carries windowId {}", cp.window_id))
            }
            Some(_) => None,
        };
        Lookup {
            checkpoint,
            source,
            problem,
            notes,
        }
    }

    fn load_payload(&self, cp: &Checkpoint) -> Result<Payload, String> {
        let path = checkpoint::resolve_payload_path(&self.payload_root, &cp.payload_path);
        let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut out = Payload {
            bytes: Vec::new(),
            leaves: Vec::new(),
            leaf_hashes: Vec::new(),
            canonical_lines: Vec::new(),
            problems: Vec::new(),
        };
        let body = match bytes.strip_suffix(b"\n") {
            Some(body) => body,
            None if bytes.is_empty() => &bytes[..],
            None => {
                out.problems.push("missing final newline".into());
                &bytes[..]
            }
        };
        if !bytes.is_empty() {
            for (i, raw) in body.split(|b| *b == b'\n').enumerate() {
                match self.check_line(raw) {
                    Ok(line) => {
                        out.leaf_hashes.push(merkle::leaf_hash(line.as_bytes()));
                        out.leaves.push(line.clone().into_bytes());
                        out.canonical_lines.push(line);
                    }
                    Err(problem) => {
                        out.problems.push(format!("line {}: {problem}", i + 1));
                        out.leaf_hashes.push(merkle::leaf_hash(raw));
                        out.leaves.push(raw.to_vec());
                    }
                }
            }
        }
        out.bytes = bytes;
        Ok(out)
    }

    fn check_line(&self, raw: &[u8]) -> Result<String, String> {
        let text = std::str::from_utf8(raw).map_err(|_| "not UTF-8".to_string())?;
        let canon = canonical::canonicalize_str(text, &self.canonical).map_err(|e| e.to_string())?;
        if canon != text {
            return Err("not in canonical form".into());
        }
        Ok(canon)
    }

    fn results(&self) -> Option<&Result<BTreeMap<String, AggregateResult>, String>> {
        let path = self.results.as_ref()?;
        Some(self.results_cache.get_or_init(|| {
            let rows: Vec<AggregateResult> = ndjson::read_values(path).map_err(|e| e.to_string())?;
            // later lines win
            Ok(rows.into_iter().map(|r| (r.window_id.clone(), r)).collect())
        }))
    }

    pub fn verify_window(&self, window_id: &str, stream: &str) -> AuditVerdict {
        self.verify_window_timed(window_id, stream).0
    }

    /// Runs the five verification steps and the auxiliary checks.
    pub fn verify_window_timed(&self, window_id: &str, stream: &str) -> (AuditVerdict, Timing) {
        let started = Instant::now();
        let mut timing = Timing::default();
        let mut checks = Checks::all_skipped();
        let lookup = self.lookup(window_id, Some(stream));
        let mut notes = lookup.notes;
        let finish = |checks: Checks, notes: Vec<String>, mut timing: Timing| {
            let mandatory = checks.checkpoint_found.passed()
                && checks.payload_readable.passed()
                && checks.count_match.passed()
                && checks.root_match.passed();
            let auxiliary = !checks.payload_hash_match.failed() && !checks.aggregates_match.failed();
            let verified = mandatory && (!self.strict || auxiliary);
            timing.total_nanos = started.elapsed().as_nanos() as u64;
            let verdict = AuditVerdict {
                window_id: window_id.to_string(),
                stream: stream.to_string(),
                status: if verified { VerdictStatus::Verified } else { VerdictStatus::Failed },
                strict: self.strict,
                checkpoint_source: lookup.source,
                checks,
                notes,
            };
            (verdict, timing)
        };

        let cp = match (lookup.checkpoint, lookup.problem) {
            (Some(cp), None) => cp,
            (_, problem) => {
                checks.checkpoint_found = Check::fail(problem.unwrap_or_default());
                return finish(checks, notes, timing);
            }
        };
        checks.checkpoint_found = Check::pass();
        if cp.blockchain_stream != stream {
            notes.push(format!("checkpoint names stream {}", cp.blockchain_stream));
        }

        let t0 = Instant::now();
        let payload = match self.load_payload(&cp) {
            Ok(p) => p,
            Err(e) => {
                checks.payload_readable = Check::fail(e);
                return finish(checks, notes, timing);
            }
        };
        timing.canonicalize_nanos = t0.elapsed().as_nanos() as u64;
        timing.record_count = payload.leaves.len() as u64;

        checks.payload_readable = match payload.problems.first() {
            None => Check::pass(),
            Some(first) => Check::fail(format!("{} problem(s); first: {first}", payload.problems.len())),
        };
        checks.payload_hash_match = Check::compare(cp.payload_sha256, merkle::leaf_hash(&payload.bytes));

        let n_hat = payload.leaves.len() as u64;
        checks.count_match = Check::compare(cp.record_count, n_hat);

        let t1 = Instant::now();
        let r_hat = MerkleTree::from_leaf_hashes(payload.leaf_hashes.clone()).root();
        timing.merkle_nanos = t1.elapsed().as_nanos() as u64;
        checks.root_match = match r_hat {
            Some(root) => Check::compare(cp.merkle_root, root),
            // An anchored empty window commits to SHA-256 of nothing.
            None if cp.record_count == 0 => Check::compare(cp.merkle_root, checkpoint::empty_window_root())
                .with_detail("empty payload"),
            None => Check::fail("empty payload"),
        };

        checks.aggregates_match = self.check_aggregates(&cp, &payload);
        finish(checks, notes, timing)
    }

    fn check_aggregates(&self, cp: &Checkpoint, payload: &Payload) -> Check {
        let Some(results) = self.results() else {
            return Check::skipped();
        };
        if !payload.problems.is_empty() {
            return Check::skipped().with_detail("payload unreadable");
        }
        if payload.canonical_lines.is_empty() {
            return Check::skipped().with_detail("empty window has no aggregate");
        }
        let recorded = match results {
            Ok(map) => map.get(&cp.window_id),
            Err(e) => return Check::fail(format!("results unreadable: {e}")),
        };
        let key = match cp.window_key() {
            Ok(k) => k,
            Err(e) => return Check::fail(e.to_string()),
        };
        let recomputed = match aggregate::aggregate_lines(&key, payload.canonical_lines.iter().map(String::as_str)) {
            Ok(a) => a,
            Err(e) => return Check::fail(format!("cannot recompute: {e}")),
        };
        match recorded {
            Some(recorded) => Check::compare(recorded, &recomputed),
            None => Check {
                status: CheckStatus::Fail,
                expected: None,
                actual: Some(json!(recomputed)),
                detail: Some("no recorded aggregate for this window".into()),
            },
        }
    }

    /// Membership audit of one record via a Merkle inclusion proof.
    /// `stream` selects the ledger stream; without it only the mirror log is
    /// consulted.
    pub fn verify_record(
        &self,
        window_id: &str,
        stream: Option<&str>,
        record: &Record,
    ) -> Result<RecordVerdict, AuditError> {
        let unavailable = |why: String| AuditError::WindowUnavailable(window_id.to_string(), why);
        let lookup = self.lookup(window_id, stream);
        let cp = match (lookup.checkpoint, lookup.problem) {
            (Some(cp), None) => cp,
            (_, problem) => return Err(unavailable(problem.unwrap_or_default())),
        };
        let payload = self.load_payload(&cp).map_err(unavailable)?;
        let target = canonical::canonicalize(record, &self.canonical)?;
        let leaf = merkle::leaf_hash(target.as_bytes());
        let tree = MerkleTree::from_leaf_hashes(payload.leaf_hashes);
        let mut verdict = RecordVerdict {
            window_id: window_id.to_string(),
            status: MembershipStatus::Fail,
            leaf,
            merkle_root: cp.merkle_root,
            proof: None,
            folded_root: None,
            detail: None,
        };
        match tree.proof(&leaf) {
            Ok(proof) => {
                let folded = proof.fold();
                if folded == cp.merkle_root {
                    verdict.status = MembershipStatus::Pass;
                } else {
                    verdict.detail = Some("proof does not fold to the anchored root".into());
                }
                verdict.folded_root = Some(folded);
                verdict.proof = Some(proof);
            }
            Err(_) => verdict.detail = Some("record is not a leaf of this window".into()),
        }
        Ok(verdict)
    }

    /// Window ids to audit on `stream`: ledger keys in confirmation order,
    /// else the mirror log.
    fn window_ids(&self, stream: &str, errors: &mut Vec<StreamError>) -> Vec<String> {
        let mut ids = Vec::new();
        let mut from_ledger = false;
        if let Some(ledger) = &self.ledger {
            match ledger.list_items(stream, 0) {
                Ok(items) => {
                    ids = items.into_iter().map(|i| i.key).collect();
                    from_ledger = true;
                }
                Err(e) => errors.push(StreamError {
                    stream: stream.to_string(),
                    error: e.to_string(),
                }),
            }
        }
        if !from_ledger {
            if let Some(path) = &self.mirror_log {
                match MirrorLog::read(path) {
                    Ok(entries) => {
                        ids = entries
                            .into_iter()
                            .filter(|e| e.checkpoint.blockchain_stream == stream)
                            .map(|e| e.checkpoint.window_id)
                            .collect()
                    }
                    Err(e) => errors.push(StreamError {
                        stream: stream.to_string(),
                        error: e.to_string(),
                    }),
                }
            }
        }
        let mut seen = BTreeSet::new();
        ids.retain(|id| seen.insert(id.clone()));
        ids
    }

    /// Verifies every checkpoint on the given streams.
    pub fn verify_all(&self, streams: &[String]) -> AuditSummary {
        let mut summary = AuditSummary {
            total: 0,
            verified: 0,
            failed: 0,
            verdicts: Vec::new(),
            timings: Vec::new(),
            errors: Vec::new(),
        };
        for stream in streams {
            for id in self.window_ids(stream, &mut summary.errors) {
                let (verdict, timing) = self.verify_window_timed(&id, stream);
                summary.total += 1;
                if verdict.is_verified() {
                    summary.verified += 1;
                } else {
                    summary.failed += 1;
                }
                summary.timings.push(WindowTiming {
                    window_id: id,
                    stream: stream.clone(),
                    timing,
                });
                summary.verdicts.push(verdict);
            }
        }
        summary
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::CanonicalRecord;
    use crate::checkpoint::{EmptyWindowPolicy, MirrorEntry};
    use crate::ledger::{SimulatorConfig, SimulatorLedger};
    use crate::windowing::WindowSpec;
    use std::fs;

    struct Fixture {
        dir: tempfile::TempDir,
        cp: Checkpoint,
        records: Vec<Record>,
        ledger: Arc<SimulatorLedger>,
    }

    fn fixture(n: usize) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let spec = WindowSpec::new(7200, 0).unwrap();
        let key = spec.key("S", 240_000);
        let records: Vec<Record> = (0..n)
            .map(|i| Record::new("S", key.start_epoch + 60 * i as i64, 10.0 + i as f64 / 10.0))
            .collect();
        let canon: Vec<CanonicalRecord> = records
            .iter()
            .map(|r| canonical::canonicalize(r, &CanonicalConfig::default()).unwrap())
            .collect();
        let payload = checkpoint::write_payload(dir.path(), "Files/payloads", &key, &canon).unwrap();
        let cp = checkpoint::build_checkpoint(&key, &canon, (0, n.saturating_sub(1) as u64), &payload, "SCheck", EmptyWindowPolicy::Anchor)
            .unwrap();
        let ledger = Arc::new(SimulatorLedger::new(SimulatorConfig::default()));
        ledger.ensure_stream("SCheck").unwrap();
        ledger.publish("SCheck", &cp.window_id, cp.to_canonical_json().as_bytes()).unwrap();
        ledger.settle().unwrap();
        if n > 0 {
            let agg = aggregate::aggregate_lines(&key, canon.iter().map(CanonicalRecord::as_str)).unwrap();
            fs::write(dir.path().join("results.ndjson"), agg.to_line() + "\n").unwrap();
        }
        Fixture { dir, cp, records, ledger }
    }

    fn auditor(f: &Fixture) -> Auditor {
        Auditor::new(f.dir.path()).with_ledger(f.ledger.clone())
    }

    fn payload_path(f: &Fixture) -> PathBuf {
        f.dir.path().join(&f.cp.payload_path)
    }

    #[test]
    fn intact_window_verifies() {
        let f = fixture(4);
        let v = auditor(&f).with_results(f.dir.path().join("results.ndjson")).verify_window(&f.cp.window_id, "SCheck");
        assert!(v.is_verified(), "{v:#?}");
        assert_eq!(v.checkpoint_source, Some(CheckpointSource::Ledger));
        assert_eq!(v.checks.count_match.actual, Some(json!(4)));
        assert!(v.checks.aggregates_match.passed());
        assert!(v.failing_checks().is_empty());
    }

    #[test]
    fn flipped_byte_fails_root_and_hash() {
        let f = fixture(3);
        let mut bytes = fs::read(payload_path(&f)).unwrap();
        let pos = bytes.iter().position(|b| *b == b'1').unwrap();
        bytes[pos] = b'2';
        fs::write(payload_path(&f), &bytes).unwrap();
        let v = auditor(&f).verify_window(&f.cp.window_id, "SCheck");
        assert_eq!(v.status, VerdictStatus::Failed);
        assert!(v.checks.root_match.failed());
        assert!(v.checks.payload_hash_match.failed());
    }

    #[test]
    fn unparseable_line_still_fails_root() {
        let f = fixture(3);
        let mut bytes = fs::read(payload_path(&f)).unwrap();
        bytes[0] = b'[';
        fs::write(payload_path(&f), &bytes).unwrap();
        let v = auditor(&f).verify_window(&f.cp.window_id, "SCheck");
        assert!(v.checks.payload_readable.failed());
        assert!(v.checks.root_match.failed());
        assert!(v.checks.count_match.passed());
    }

    #[test]
    fn non_canonical_line_is_unreadable() {
        let f = fixture(2);
        let text = fs::read_to_string(payload_path(&f)).unwrap();
        // same value, lowercase `z`: canonicalization would absorb it
        fs::write(payload_path(&f), text.replacen("Z\"", "z\"", 1)).unwrap();
        let v = auditor(&f).verify_window(&f.cp.window_id, "SCheck");
        assert!(v.checks.payload_readable.failed(), "{v:#?}");
        assert!(v.checks.root_match.failed());
    }

    #[test]
    fn deleted_and_inserted_lines_fail_count() {
        let f = fixture(3);
        let text = fs::read_to_string(payload_path(&f)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        fs::write(payload_path(&f), format!("{}\n{}\n", lines[0], lines[2])).unwrap();
        let v = auditor(&f).verify_window(&f.cp.window_id, "SCheck");
        assert!(v.checks.count_match.failed() && v.checks.root_match.failed());

        fs::write(payload_path(&f), format!("{text}{}\n", lines[1])).unwrap();
        let v = auditor(&f).verify_window(&f.cp.window_id, "SCheck");
        assert!(v.checks.count_match.failed());
        assert_eq!(v.status, VerdictStatus::Failed);
    }

    #[test]
    fn altered_aggregate_fails_only_in_strict_mode() {
        let f = fixture(3);
        let results = f.dir.path().join("results.ndjson");
        let mut agg: AggregateResult = serde_json::from_str(fs::read_to_string(&results).unwrap().trim()).unwrap();
        agg.avg = "99.00".into();
        fs::write(&results, agg.to_line() + "\n").unwrap();
        let lenient = auditor(&f).with_results(&results).verify_window(&f.cp.window_id, "SCheck");
        assert!(lenient.checks.aggregates_match.failed());
        assert!(lenient.is_verified());
        let strict = auditor(&f).with_results(&results).strict(true).verify_window(&f.cp.window_id, "SCheck");
        assert_eq!(strict.status, VerdictStatus::Failed);
        assert_eq!(strict.failing_checks(), ["aggregatesMatch"]);
    }

    #[test]
    fn unknown_window_is_failed() {
        let f = fixture(1);
        let v = auditor(&f).verify_window("S:2000-01-01T00:00:00Z_2000-01-01T02:00:00Z", "SCheck");
        assert_eq!(v.status, VerdictStatus::Failed);
        assert!(v.checks.checkpoint_found.failed());
        assert_eq!(v.checks.root_match.status, CheckStatus::Skipped);
    }

    #[test]
    fn mirror_fallback_and_disagreement() {
        let f = fixture(2);
        let mirror = f.dir.path().join("checkpoints.ndjson");
        let log = MirrorLog::open(&mirror).unwrap();
        let mut forged = f.cp.clone();
        forged.record_count = 5;
        log.append(&MirrorEntry {
            anchored_at: "2025-01-01T00:00:00Z".into(),
            checkpoint: forged,
            environment: None,
            txid: "00".into(),
        })
        .unwrap();
        let v = auditor(&f).with_mirror_log(&mirror).verify_window(&f.cp.window_id, "SCheck");
        assert!(v.is_verified());
        assert!(v.notes.iter().any(|n| n.contains("disagree")));

        // no ledger: the (forged) mirror entry is all there is
        let v = Auditor::new(f.dir.path()).with_mirror_log(&mirror).verify_window(&f.cp.window_id, "SCheck");
        assert_eq!(v.checkpoint_source, Some(CheckpointSource::Mirror));
        assert!(v.checks.count_match.failed());

        f.ledger.set_online(false);
        let v = auditor(&f).with_mirror_log(&mirror).verify_window(&f.cp.window_id, "SCheck");
        assert_eq!(v.checkpoint_source, Some(CheckpointSource::Mirror));
        assert!(v.notes.iter().any(|n| n.contains("unreachable")));
    }

    #[test]
    fn anchored_empty_window_verifies() {
        let f = fixture(0);
        assert_eq!(fs::read(payload_path(&f)).unwrap(), b"");
        let v = auditor(&f).verify_window(&f.cp.window_id, "SCheck");
        assert!(v.is_verified(), "{v:#?}");
    }

    #[test]
    fn record_membership() {
        let f = fixture(5);
        let a = auditor(&f);
        let member = a.verify_record(&f.cp.window_id, Some("SCheck"), &f.records[2]).unwrap();
        assert_eq!(member.status, MembershipStatus::Pass);
        assert!(member.proof.unwrap().verify(&f.cp.merkle_root));

        let mut altered = f.records[2].clone();
        altered.temperature += 0.1;
        let v = a.verify_record(&f.cp.window_id, Some("SCheck"), &altered).unwrap();
        assert_eq!(v.status, MembershipStatus::Fail);

        let elsewhere = Record::new("S", f.records[0].event_time - 7200, f.records[0].temperature);
        let v = a.verify_record(&f.cp.window_id, Some("SCheck"), &elsewhere).unwrap();
        assert_eq!(v.status, MembershipStatus::Fail);

        assert!(matches!(
            a.verify_record("S:2000-01-01T00:00:00Z_2000-01-01T02:00:00Z", Some("SCheck"), &f.records[0]),
            Err(AuditError::WindowUnavailable(..))
        ));
    }

    #[test]
    fn verify_all_and_determinism() {
        let f = fixture(3);
        let a = auditor(&f);
        let s = a.verify_all(&["SCheck".to_string()]);
        assert_eq!((s.total, s.verified, s.failed), (1, 1, 0));
        assert_eq!(s.timings[0].timing.record_count, 3);
        let t = s.timings[0].timing;
        assert!(t.total_nanos >= t.canonicalize_nanos + t.merkle_nanos);
        assert_eq!(
            serde_json::to_string(&a.verify_all(&["SCheck".to_string()])).unwrap(),
            serde_json::to_string(&s).unwrap()
        );
        f.ledger.ensure_stream("Empty").unwrap();
        let empty = a.verify_all(&["Empty".to_string()]);
        assert_eq!(empty.total, 0);
        assert!(empty.all_verified());
    }
}
