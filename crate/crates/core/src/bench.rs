//! Verification latency scaling and ledger throughput measurements.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auditor::{Auditor, VerdictStatus};
use crate::canonical::{self, CanonicalConfig, Record};
use crate::checkpoint::{self, EmptyWindowPolicy, MirrorEntry, MirrorLog};
use crate::ledger::{Ledger, LedgerError};
use crate::utc;
use crate::windowing::WindowSpec;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need at least 3 distinct record counts to fit, got {0}")]
    InsufficientData(usize),
    #[error("nothing to export")]
    Empty,
    #[error("window {0} did not verify during warm-up")]
    Unverified(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// One timed verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub window_id: String,
    pub record_count: u64,
    pub rep: u32,
    pub canonicalize_nanos: u64,
    pub merkle_nanos: u64,
    pub total_nanos: u64,
    /// `record_count / total seconds`.
    pub throughput_records_per_sec: f64,
}

/// Least-squares line `T(n) = alpha * n + beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LinearFit {
    /// Marginal cost per record, nanoseconds.
    pub alpha: f64,
    /// Fixed overhead, nanoseconds.
    pub beta: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares over `(x, y)` points.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearFit, BenchError> {
    let distinct: BTreeSet<u64> = points.iter().map(|(x, _)| x.to_bits()).collect();
    if distinct.len() < 3 {
        return Err(BenchError::InsufficientData(distinct.len()));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let alpha = sxy / sxx;
    let beta = mean_y - alpha * mean_x;
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|(x, y)| (y - (alpha * x + beta)).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 { 1.0 } else { 0.0 }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LinearFit {
        alpha,
        beta,
        r_squared,
        points: points.len(),
    })
}

fn median(values: &mut [u64]) -> u64 {
    values.sort_unstable();
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        ((values[m - 1] as u128 + values[m] as u128) / 2) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyBench {
    pub samples: Vec<LatencySample>,
    pub fit: LinearFit,
    /// Samples slower than ten times the median of their window.
    pub outliers: Vec<String>,
}

/// A window to time: (ledger stream, window id).
pub type WindowRef = (String, String);

/// Times `verify_window` `reps` times per window, after one untimed pass
/// when `warm_up` is set. The fit runs over each window's median total.
pub fn bench_verify(
    auditor: &Auditor,
    windows: &[WindowRef],
    reps: u32,
    warm_up: bool,
) -> Result<VerifyBench, BenchError> {
    if warm_up {
        for (stream, id) in windows {
            if auditor.verify_window(id, stream).status != VerdictStatus::Verified {
                return Err(BenchError::Unverified(id.clone()));
            }
        }
    }
    let mut samples = Vec::new();
    for rep in 0..reps.max(1) {
        for (stream, id) in windows {
            let (_, t) = auditor.verify_window_timed(id, stream);
            samples.push(LatencySample {
                window_id: id.clone(),
                record_count: t.record_count,
                rep,
                canonicalize_nanos: t.canonicalize_nanos,
                merkle_nanos: t.merkle_nanos,
                total_nanos: t.total_nanos,
                throughput_records_per_sec: t.record_count as f64 / (t.total_nanos.max(1) as f64 / 1e9),
            });
        }
    }
    samples.sort_by(|a, b| (a.record_count, &a.window_id, a.rep).cmp(&(b.record_count, &b.window_id, b.rep)));

    let mut per_window: BTreeMap<&str, (u64, Vec<u64>)> = BTreeMap::new();
    for s in &samples {
        per_window
            .entry(&s.window_id)
            .or_insert((s.record_count, Vec::new()))
            .1
            .push(s.total_nanos);
    }
    let mut points = Vec::new();
    let mut outliers = Vec::new();
    for (id, (n, totals)) in per_window.iter_mut() {
        let med = median(totals);
        points.push((*n as f64, med as f64));
        for t in totals.iter().filter(|t| **t > med.saturating_mul(10)) {
            log::warn!("outlier: {id} took {t} ns against a median of {med} ns");
            outliers.push(format!("{id}: {t} ns (median {med} ns)"));
        }
    }
    let fit = fit_linear(&points)?;
    Ok(VerifyBench {
        samples,
        fit,
        outliers,
    })
}

pub const SYNTHETIC_STREAM: &str = "BenchCheck";

/// Writes one sealed window per requested size under `dir` (payloads plus a
/// mirror log) and returns an auditor over them with the window list.
pub fn synthetic_corpus(dir: &Path, sizes: &[usize], seed: u64) -> Result<(Auditor, Vec<WindowRef>), BenchError> {
    let spec = WindowSpec::new(86_400, 0).expect("non-zero duration");
    let cfg = CanonicalConfig::default();
    let log_path = dir.join("checkpoints.ndjson");
    let _ = std::fs::remove_file(&log_path);
    let log = MirrorLog::open(&log_path).map_err(|e| io_err(&log_path, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut windows = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        let source = format!("bench-{n}-{k}");
        let key = spec.key(source.clone(), 20_000);
        let canon = (0..n)
            .map(|i| {
                let temp = (rng.gen_range(-50.0..50.0_f64) * 10.0).round() / 10.0;
                let r = Record::new(source.clone(), key.start_epoch + i as i64 % 86_400, temp)
                    .with_extra("seq", serde_json::Value::from(i as u64));
                canonical::canonicalize(&r, &cfg)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| io_err(dir, e))?;
        let payload = checkpoint::write_payload(dir, "payloads", &key, &canon).map_err(|e| io_err(dir, e))?;
        let cp = checkpoint::build_checkpoint(
            &key,
            &canon,
            (0, n.saturating_sub(1) as u64),
            &payload,
            SYNTHETIC_STREAM,
            EmptyWindowPolicy::Skip,
        )
        .map_err(|e| io_err(dir, e))?;
        windows.push((SYNTHETIC_STREAM.to_string(), cp.window_id.clone()));
        log.append(&MirrorEntry {
            anchored_at: utc::format_utc(key.end_epoch).unwrap_or_default(),
            checkpoint: cp,
            environment: None,
            txid: format!("{k:064x}"),
        })
        .map_err(|e| io_err(&log_path, e))?;
    }
    Ok((Auditor::new(dir).with_mirror_log(log_path), windows))
}

/// Confirmed and API-side throughput of one publisher run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TpsReport {
    pub stream_name: String,
    pub workers: u32,
    pub payload_bytes: usize,
    pub submitted: u64,
    pub failed: u64,
    /// Confirmed transactions found via `list_items`.
    pub tx_count: u64,
    pub first_confirm: Option<i64>,
    pub last_confirm: Option<i64>,
    /// `tx_count / (last_confirm - first_confirm)`; absent below two
    /// transactions or for a zero span.
    pub tps: Option<f64>,
    pub api_elapsed_nanos: u64,
    /// Submissions per wall-clock second.
    pub api_tps: f64,
    pub errors: Vec<String>,
}

/// TPS over confirmation timestamps: count divided by the span between the
/// first and last confirmation.
pub fn tps_formula(confirmations: &[i64]) -> Option<f64> {
    let first = *confirmations.iter().min()?;
    let last = *confirmations.iter().max()?;
    if confirmations.len() < 2 || last <= first {
        return None;
    }
    Some(confirmations.len() as f64 / (last - first) as f64)
}

/// Runs `workers` concurrent publishers, each sending `tx_per_worker` items
/// of `payload_bytes` random bytes to `stream`, then settles the ledger and
/// measures confirmed throughput from the listed items.
pub fn bench_tps(
    ledger: Arc<dyn Ledger>,
    stream: &str,
    workers: u32,
    payload_bytes: usize,
    tx_per_worker: u32,
) -> Result<TpsReport, BenchError> {
    ledger.ensure_stream(stream)?;
    let start_height = 0;
    let started = Instant::now();
    let results: Vec<(Vec<String>, Vec<String>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let ledger = ledger.clone();
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(w as u64);
                    let mut txids = Vec::new();
                    let mut errors = Vec::new();
                    let mut buf = vec![0u8; payload_bytes];
                    for i in 0..tx_per_worker {
                        rng.fill_bytes(&mut buf);
                        match ledger.publish(stream, &format!("w{w}-{i}"), &buf) {
                            Ok(r) => txids.push(r.txid),
                            Err(e) => errors.push(e.to_string()),
                        }
                    }
                    (txids, errors)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| (Vec::new(), vec!["worker panicked".into()])))
            .collect()
    });
    let api_elapsed = started.elapsed();
    let ours: BTreeSet<String> = results.iter().flat_map(|(t, _)| t.iter().cloned()).collect();
    let errors: Vec<String> = results.into_iter().flat_map(|(_, e)| e).collect();

    ledger.settle()?;
    let confirmations: Vec<i64> = ledger
        .list_items(stream, start_height)?
        .into_iter()
        .filter(|item| ours.contains(&item.txid))
        .map(|item| item.confirmed_at)
        .collect();
    let submitted = ours.len() as u64;
    Ok(TpsReport {
        stream_name: stream.to_string(),
        workers,
        payload_bytes,
        submitted,
        failed: errors.len() as u64,
        tx_count: confirmations.len() as u64,
        first_confirm: confirmations.iter().min().copied(),
        last_confirm: confirmations.iter().max().copied(),
        tps: tps_formula(&confirmations),
        api_elapsed_nanos: api_elapsed.as_nanos() as u64,
        api_tps: submitted as f64 / api_elapsed.as_secs_f64().max(1e-9),
        errors,
    })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TpsRow {
    pub stream_name: String,
    pub workers: u32,
    pub payload_bytes: usize,
    pub submitted: u64,
    pub failed: u64,
    pub tx_count: u64,
    pub first_confirm: String,
    pub last_confirm: String,
    pub confirmed_tps: Option<f64>,
    pub api_tps: f64,
    pub api_elapsed_nanos: u64,
}

impl From<&TpsReport> for TpsRow {
    fn from(r: &TpsReport) -> Self {
        let iso = |t: Option<i64>| t.and_then(utc::format_utc).unwrap_or_default();
        TpsRow {
            stream_name: r.stream_name.clone(),
            workers: r.workers,
            payload_bytes: r.payload_bytes,
            submitted: r.submitted,
            failed: r.failed,
            tx_count: r.tx_count,
            first_confirm: iso(r.first_confirm),
            last_confirm: iso(r.last_confirm),
            confirmed_tps: r.tps,
            api_tps: r.api_tps,
            api_elapsed_nanos: r.api_elapsed_nanos,
        }
    }
}

pub const LATENCY_COLUMNS: [&str; 7] = [
    "window_id",
    "record_count",
    "rep",
    "canonicalize_nanos",
    "merkle_nanos",
    "total_nanos",
    "throughput_records_per_sec",
];

pub const TPS_COLUMNS: [&str; 11] = [
    "stream_name",
    "workers",
    "payload_bytes",
    "submitted",
    "failed",
    "tx_count",
    "first_confirm",
    "last_confirm",
    "confirmed_tps",
    "api_tps",
    "api_elapsed_nanos",
];

/// Writes rows as headered CSV. Empty input is an error and writes nothing.
pub fn export_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<(), BenchError> {
    if rows.is_empty() {
        return Err(BenchError::Empty);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| io_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(path, e))?;
    crate::ndjson::write_atomic(path, &bytes).map_err(|e| io_err(path, e))
}

pub fn export_latency_csv(samples: &[LatencySample], path: &Path) -> Result<(), BenchError> {
    export_csv(samples, path)
}

pub fn export_tps_csv(reports: &[TpsReport], path: &Path) -> Result<(), BenchError> {
    let rows: Vec<TpsRow> = reports.iter().map(TpsRow::from).collect();
    export_csv(&rows, path)
}
