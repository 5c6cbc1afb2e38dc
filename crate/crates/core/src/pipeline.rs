//! Window state, sealing, anchoring and the end-to-end run.
//!
//! Each source has its own lane of windows keyed by window index; when a
//! region is configured, every record is also buffered in a region lane.
//! A source window closes once that source's watermark (max event time seen)
//! reaches `end + grace`; a region window closes once every source's
//! watermark does. Records arriving for an already-closable window are late
//! and dropped from both lanes, so membership depends on input order only
//! through each source's own sequence.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::aggregate::{self, AggregateError, AggregateResult};
use crate::canonical::{self, CanonicalConfig, CanonicalError, CanonicalRecord, Record};
use crate::checkpoint::{
    self, Checkpoint, CheckpointError, EmptyWindowPolicy, MirrorEntry, MirrorLog,
};
use crate::config::ToolConfig;
use crate::ledger::{AnchorReceipt, Ledger, LedgerError};
use crate::ndjson::{self, AppendLog, NdjsonError};
use crate::source::{self, IngestError};
use crate::utc;
use crate::windowing::{WindowError, WindowKey, WindowSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("record for unconfigured source `{0}`")]
    UnknownSource(String),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Log(#[from] NdjsonError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Records buffered for one window.
#[derive(Debug, Clone)]
pub struct WindowState {
    pub key: WindowKey,
    pub buffered: Vec<Record>,
    closed: bool,
}

impl WindowState {
    pub fn new(key: WindowKey) -> Self {
        WindowState {
            key,
            buffered: Vec::new(),
            closed: false,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Marks the window closed. Returns false if it already was.
    pub fn close(&mut self) -> bool {
        !std::mem::replace(&mut self.closed, true)
    }

    /// (min, max) offset counter per contributing source.
    pub fn offsets(&self) -> BTreeMap<String, (u64, u64)> {
        let mut out: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        for r in &self.buffered {
            if let Some(o) = r.offset() {
                out.entry(r.source_stream.clone())
                    .and_modify(|(lo, hi)| {
                        *lo = (*lo).min(o);
                        *hi = (*hi).max(o);
                    })
                    .or_insert((o, o));
            }
        }
        out
    }
}

/// How a sealed checkpoint reached (or failed to reach) the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnchorOutcome {
    Anchored(AnchorReceipt),
    /// Parked in the retry queue with the ledger error text.
    Parked(String),
}

/// Everything produced by closing one window.
#[derive(Debug, Clone)]
pub struct SealedWindow {
    pub checkpoint: Checkpoint,
    /// Absent for anchored empty windows.
    pub aggregate: Option<AggregateResult>,
    pub anchor: AnchorOutcome,
}

/// One line of the retry queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParkedCheckpoint {
    pub checkpoint: Checkpoint,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SealedSummary {
    pub window_id: String,
    pub blockchain_stream: String,
    pub record_count: u64,
    pub anchored: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub records_in: u64,
    pub late_dropped: u64,
    pub windows_sealed: u64,
    pub anchored: u64,
    pub parked: u64,
    pub retried: u64,
    pub still_parked: u64,
    /// Windows left open because their close point was never reached.
    pub open_windows: u64,
    pub sealed: Vec<SealedSummary>,
}

#[derive(Debug)]
struct Lane {
    label: String,
    stream: String,
    watermark: Option<i64>,
    open: BTreeMap<i64, WindowState>,
    last_closed: Option<i64>,
}

impl Lane {
    fn new(label: &str, stream: &str) -> Self {
        Lane {
            label: label.to_string(),
            stream: stream.to_string(),
            watermark: None,
            open: BTreeMap::new(),
            last_closed: None,
        }
    }
}

/// Informational description of where the pipeline ran.
pub fn environment() -> Value {
    json!({
        "arch": std::env::consts::ARCH,
        "os": std::env::consts::OS,
        "tool": concat!("streamseal ", env!("CARGO_PKG_VERSION")),
    })
}

pub struct Pipeline {
    spec: WindowSpec,
    canonical: CanonicalConfig,
    policy: EmptyWindowPolicy,
    payload_root: PathBuf,
    base_dir: String,
    ledger: Arc<dyn Ledger>,
    mirror: MirrorLog,
    results: AppendLog,
    retry_path: PathBuf,
    environment: Value,
    sources: BTreeMap<String, Lane>,
    region: Option<Lane>,
    ensured: BTreeSet<String>,
    report: RunReport,
}

impl Pipeline {
    pub fn new(cfg: &ToolConfig, ledger: Arc<dyn Ledger>) -> Result<Pipeline, PipelineError> {
        let sources = cfg
            .sources
            .iter()
            .map(|s| (s.name.clone(), Lane::new(&s.name, &s.blockchain_stream)))
            .collect();
        Ok(Pipeline {
            spec: cfg.window_spec()?,
            canonical: cfg.canonical_config(),
            policy: cfg.empty_window_policy,
            payload_root: cfg.root.clone(),
            base_dir: cfg.payload.base_dir.clone(),
            ledger,
            mirror: MirrorLog::open(cfg.checkpoint_log_path())?,
            results: AppendLog::open(cfg.results_path())?,
            retry_path: cfg.retry_queue_path(),
            environment: environment(),
            sources,
            region: cfg.region.as_ref().map(|r| Lane::new(&r.name, &r.blockchain_stream)),
            ensured: BTreeSet::new(),
            report: RunReport::default(),
        })
    }

    pub fn report(&self) -> &RunReport {
        &self.report
    }

    /// Feeds one record and seals whatever becomes closable.
    pub fn process(&mut self, record: Record) -> Result<Vec<SealedWindow>, PipelineError> {
        self.report.records_in += 1;
        let grace = self.spec.grace_seconds();
        let index = self.spec.index_of(record.event_time);
        let key = self.spec.key(record.source_stream.clone(), index);
        let lane = self
            .sources
            .get_mut(&record.source_stream)
            .ok_or_else(|| PipelineError::UnknownSource(record.source_stream.clone()))?;
        if lane.watermark.is_some_and(|wm| wm >= key.end_epoch + grace) {
            log::warn!("dropping late record for {key} at offset {:?}", record.offset());
            self.report.late_dropped += 1;
            return Ok(Vec::new());
        }
        lane.watermark = Some(lane.watermark.map_or(record.event_time, |wm| wm.max(record.event_time)));
        if let Some(region) = &mut self.region {
            region
                .open
                .entry(index)
                .or_insert_with(|| WindowState::new(key.relabel(region.label.clone())))
                .buffered
                .push(record.clone());
        }
        lane.open
            .entry(index)
            .or_insert_with(|| WindowState::new(key))
            .buffered
            .push(record.clone());

        let mut sealed = self.close_ready(Some(&record.source_stream))?;
        sealed.extend(self.close_ready(None)?);
        Ok(sealed)
    }

    fn region_watermark(&self) -> Option<i64> {
        self.sources
            .values()
            .map(|l| l.watermark)
            .collect::<Option<Vec<_>>>()
            .and_then(|w| w.into_iter().min())
    }

    /// Closes the ready windows of one source lane (`Some`) or the region.
    fn close_ready(&mut self, source: Option<&str>) -> Result<Vec<SealedWindow>, PipelineError> {
        let watermark = match source {
            Some(name) => self.sources[name].watermark,
            None if self.region.is_some() => self.region_watermark(),
            None => None,
        };
        let Some(wm) = watermark else {
            return Ok(Vec::new());
        };
        let grace = self.spec.grace_seconds();
        let lane = self.lane_mut(source);
        let ready: Vec<i64> = lane
            .open
            .iter()
            .take_while(|(_, w)| wm >= w.key.end_epoch + grace)
            .map(|(i, _)| *i)
            .collect();
        self.close_indices(source, ready)
    }

    fn lane_mut(&mut self, source: Option<&str>) -> &mut Lane {
        match source {
            Some(name) => self.sources.get_mut(name).expect("known source"),
            None => self.region.as_mut().expect("region configured"),
        }
    }

    fn close_indices(
        &mut self,
        source: Option<&str>,
        indices: Vec<i64>,
    ) -> Result<Vec<SealedWindow>, PipelineError> {
        let mut out = Vec::new();
        for index in indices {
            let lane = self.lane_mut(source);
            let gap_start = lane.last_closed.map(|c| c + 1);
            let mut state = lane.open.remove(&index).expect("open window");
            lane.last_closed = Some(index);
            let (label, stream) = (lane.label.clone(), lane.stream.clone());
            if self.policy == EmptyWindowPolicy::Anchor {
                for gap in gap_start.unwrap_or(index)..index {
                    let mut empty = WindowState::new(self.spec.key(label.clone(), gap));
                    out.extend(self.close_window(&mut empty, &stream)?);
                }
            }
            out.extend(self.close_window(&mut state, &stream)?);
        }
        Ok(out)
    }

    /// Seals every open window regardless of watermarks.
    pub fn flush(&mut self) -> Result<Vec<SealedWindow>, PipelineError> {
        let mut out = Vec::new();
        let names: Vec<String> = self.sources.keys().cloned().collect();
        for name in &names {
            let indices = self.sources[name].open.keys().copied().collect();
            out.extend(self.close_indices(Some(name), indices)?);
        }
        if let Some(region) = &self.region {
            let indices = region.open.keys().copied().collect();
            out.extend(self.close_indices(None, indices)?);
        }
        Ok(out)
    }

    /// Canonicalize, dedupe, write payload, build and anchor the checkpoint,
    /// and emit the aggregate.
    pub fn close_window(
        &mut self,
        state: &mut WindowState,
        stream: &str,
    ) -> Result<Option<SealedWindow>, PipelineError> {
        if !state.close() {
            return Ok(None);
        }
        let canon = state
            .buffered
            .iter()
            .map(|r| canonical::canonicalize(r, &self.canonical))
            .collect::<Result<Vec<CanonicalRecord>, _>>()?;
        let canon = canonical::dedupe(canon);
        if canon.is_empty() && self.policy == EmptyWindowPolicy::Skip {
            return Ok(None);
        }
        let offsets = canon
            .iter()
            .filter_map(CanonicalRecord::origin)
            .fold(None, |acc: Option<(u64, u64)>, o| {
                Some(acc.map_or((o, o), |(lo, hi)| (lo.min(o), hi.max(o))))
            })
            .unwrap_or((0, 0));
        let payload = checkpoint::write_payload(&self.payload_root, &self.base_dir, &state.key, &canon)?;
        let cp = checkpoint::build_checkpoint(&state.key, &canon, offsets, &payload, stream, self.policy)?;
        let aggregate = if canon.is_empty() {
            None
        } else {
            Some(aggregate::aggregate_lines(&state.key, canon.iter().map(CanonicalRecord::as_str))?)
        };
        let anchor = self.anchor(&cp)?;
        if let Some(agg) = &aggregate {
            self.results.append(&agg.to_line())?;
        }
        self.report.windows_sealed += 1;
        self.report.sealed.push(SealedSummary {
            window_id: cp.window_id.clone(),
            blockchain_stream: cp.blockchain_stream.clone(),
            record_count: cp.record_count,
            anchored: matches!(anchor, AnchorOutcome::Anchored(_)),
        });
        log::info!("sealed {} ({} records)", cp.window_id, cp.record_count);
        Ok(Some(SealedWindow {
            checkpoint: cp,
            aggregate,
            anchor,
        }))
    }

    fn try_publish(&mut self, cp: &Checkpoint) -> Result<AnchorReceipt, LedgerError> {
        let stream = &cp.blockchain_stream;
        if !self.ensured.contains(stream) {
            self.ledger.ensure_stream(stream)?;
            self.ensured.insert(stream.clone());
        }
        self.ledger
            .publish(stream, &cp.window_id, cp.to_canonical_json().as_bytes())
    }

    /// Publishes with key = windowId; on failure parks the checkpoint.
    fn anchor(&mut self, cp: &Checkpoint) -> Result<AnchorOutcome, PipelineError> {
        match self.try_publish(cp) {
            Ok(receipt) => {
                self.record_anchor(cp, &receipt)?;
                self.report.anchored += 1;
                Ok(AnchorOutcome::Anchored(receipt))
            }
            Err(e) => {
                log::warn!("parking checkpoint {}: {e}", cp.window_id);
                let parked = ParkedCheckpoint {
                    checkpoint: cp.clone(),
                    error: e.to_string(),
                };
                let log = AppendLog::open(&self.retry_path)?;
                log.append(&serde_json::to_string(&parked).expect("parked serializes"))?;
                self.report.parked += 1;
                Ok(AnchorOutcome::Parked(e.to_string()))
            }
        }
    }

    fn record_anchor(&self, cp: &Checkpoint, receipt: &AnchorReceipt) -> Result<(), PipelineError> {
        let entry = MirrorEntry {
            anchored_at: utc::format_utc(receipt.published_at).unwrap_or_default(),
            checkpoint: cp.clone(),
            environment: Some(self.environment.clone()),
            txid: receipt.txid.clone(),
        };
        Ok(self.mirror.append(&entry)?)
    }

    /// Re-publishes parked checkpoints; those that fail again stay queued.
    /// Returns (anchored, still parked).
    pub fn retry_parked(&mut self) -> Result<(u64, u64), PipelineError> {
        let parked: Vec<ParkedCheckpoint> = ndjson::read_values_or_empty(&self.retry_path)?;
        if parked.is_empty() {
            return Ok((0, 0));
        }
        let mut keep = Vec::new();
        let mut ok = 0;
        for p in parked {
            match self.try_publish(&p.checkpoint) {
                Ok(receipt) => {
                    self.record_anchor(&p.checkpoint, &receipt)?;
                    ok += 1;
                }
                Err(e) => keep.push(ParkedCheckpoint {
                    checkpoint: p.checkpoint,
                    error: e.to_string(),
                }),
            }
        }
        let mut bytes = Vec::new();
        for p in &keep {
            bytes.extend_from_slice(serde_json::to_string(p).expect("parked serializes").as_bytes());
            bytes.push(b'\n');
        }
        ndjson::write_atomic(&self.retry_path, &bytes).map_err(|e| NdjsonError::io(&self.retry_path, e))?;
        self.report.retried += ok;
        self.report.anchored += ok;
        self.report.still_parked = keep.len() as u64;
        Ok((ok, keep.len() as u64))
    }

    /// Final report; counts the windows still open.
    pub fn finish(mut self) -> RunReport {
        self.report.open_windows = self.sources.values().map(|l| l.open.len() as u64).sum::<u64>()
            + self.region.as_ref().map_or(0, |r| r.open.len() as u64);
        self.report
    }
}

/// Full run: retry parked anchors, ingest and merge every source, process,
/// optionally flush at end of input, and settle the ledger if configured.
pub fn run(cfg: &ToolConfig, ledger: Arc<dyn Ledger>, flush_at_eof: bool) -> Result<RunReport, PipelineError> {
    let mut pipeline = Pipeline::new(cfg, ledger.clone())?;
    pipeline.retry_parked()?;
    let streams = cfg
        .sources
        .iter()
        .map(|s| source::ingest(s, &cfg.root))
        .collect::<Result<Vec<_>, _>>()?;
    for record in source::merge_sources(streams) {
        pipeline.process(record?)?;
    }
    if flush_at_eof {
        pipeline.flush()?;
    }
    if cfg.ledger.settle_on_exit {
        if let Err(e) = ledger.settle() {
            log::warn!("could not settle ledger: {e}");
        }
    }
    Ok(pipeline.finish())
}
