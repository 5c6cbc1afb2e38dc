use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use streamseal::auditor::{AuditSummary, AuditVerdict, Auditor, MembershipStatus};
use streamseal::bench::{self, TpsReport};
use streamseal::canonical::Record;
use streamseal::config::{ConfigError, LedgerHandle, ToolConfig};
use streamseal::corpus::{self, CorpusSpec};
use streamseal::ledger::{Ledger, SimulatorConfig, SimulatorLedger, StreamItem};
use streamseal::{pipeline, utc};

#[derive(Parser)]
#[command(name = "streamseal", version, about = "Seal, anchor and audit event-time windows")]
struct Cli {
    /// Emit one JSON document on stdout instead of a text report.
    #[arg(long, global = true)]
    json: bool,
    /// Configuration file.
    #[arg(long, global = true, default_value = "streamseal.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest the configured sources and seal every closable window.
    Run {
        /// Seal windows still open at end of input.
        #[arg(long)]
        flush_at_eof: bool,
    },
    /// Verify windows, record membership, or whole streams.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Inspect the ledger or step the simulator clock.
    #[command(subcommand)]
    Ledger(LedgerCommand),
    /// Verification latency and ledger throughput benchmarks (CSV output).
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Write a seeded synthetic corpus and its configuration file.
    Gen {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        stations: usize,
        #[arg(long, default_value_t = 48)]
        hours: u32,
        #[arg(long, default_value_t = 600)]
        interval_seconds: u32,
        #[arg(long, default_value = "2025-12-01T00:00:00Z")]
        start: String,
        #[arg(long, default_value_t = 7200)]
        window_seconds: u32,
        #[arg(long, default_value_t = 0.05)]
        duplicate_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct AuditOpts {
    /// Any failing check fails the verdict.
    #[arg(long)]
    strict: bool,
    /// Aggregates file to recompute against.
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AuditCommand {
    /// Verify one window.
    Window {
        #[arg(long)]
        id: String,
        #[arg(long)]
        stream: String,
        #[command(flatten)]
        opts: AuditOpts,
    },
    /// Check that a record is a member of a window.
    Record {
        #[arg(long)]
        id: String,
        /// JSON file holding one record object.
        #[arg(long)]
        record_file: PathBuf,
        #[arg(long)]
        stream: Option<String>,
    },
    /// Verify every checkpoint on the configured (or given) streams.
    All {
        #[arg(long = "stream")]
        streams: Vec<String>,
        #[command(flatten)]
        opts: AuditOpts,
    },
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// List confirmed items of a stream.
    List {
        #[arg(long)]
        stream: String,
        #[arg(long, default_value_t = 0)]
        from_height: u64,
    },
    /// Advance the simulated chain clock.
    SimTick {
        /// Target time (RFC 3339 or epoch seconds).
        #[arg(long, conflicts_with_all = ["advance", "settle"])]
        now: Option<String>,
        /// Seconds to advance; defaults to one block interval.
        #[arg(long, conflicts_with = "settle")]
        advance: Option<u64>,
        /// Mint blocks until nothing is pending.
        #[arg(long)]
        settle: bool,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Verification latency against record count, with a linear fit.
    Verify {
        /// Directory with a streamseal.toml deployment, or a directory to
        /// fill with a synthetic corpus.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        reps: u32,
        /// Window sizes for the synthetic corpus.
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000")]
        sizes: Vec<usize>,
        #[arg(long)]
        no_warm_up: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Publisher throughput against confirmed throughput.
    Tps {
        /// Worker counts; a comma list runs a sweep.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        workers: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "256")]
        payload_bytes: Vec<usize>,
        /// Transactions per worker.
        #[arg(long, default_value_t = 32)]
        tx: u32,
        #[arg(long, default_value = "bench")]
        stream: String,
        /// Use the configured backend instead of a fresh in-memory simulator.
        #[arg(long)]
        use_config: bool,
        /// Simulator items per block.
        #[arg(long)]
        capacity: Option<usize>,
        /// Simulator value bytes per block.
        #[arg(long)]
        block_byte_budget: Option<usize>,
        #[arg(long, default_value_t = 15)]
        block_interval: u64,
        /// Simulated API latency per publish.
        #[arg(long, default_value_t = 0)]
        submit_latency_micros: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit codes: 1 verification failed, 2 usage or config, 3 I/O or ledger.
enum Failure {
    Verification,
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verification => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Ledger(e) => Failure::Io(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn io<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Io(e.to_string())
}

fn emit<T: Serialize>(json_mode: bool, value: &T, text: impl FnOnce() -> String) {
    let out = if json_mode {
        serde_json::to_string_pretty(value).expect("report serializes") + "\n"
    } else {
        text()
    };
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = std::io::stdout().lock().write_all(out.as_bytes());
}

fn load(path: &Path) -> Result<ToolConfig, Failure> {
    Ok(ToolConfig::load(path)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Verification => {}
                Failure::Usage(m) | Failure::Io(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { flush_at_eof } => cmd_run(cli, *flush_at_eof),
        Command::Audit(cmd) => cmd_audit(cli, cmd),
        Command::Ledger(cmd) => cmd_ledger(cli, cmd),
        Command::Bench(cmd) => cmd_bench(cli, cmd),
        Command::Gen {
            seed,
            stations,
            hours,
            interval_seconds,
            start,
            window_seconds,
            duplicate_rate,
            out,
        } => {
            if *stations == 0 || *interval_seconds == 0 || *window_seconds == 0 {
                return Err(Failure::Usage("stations, interval and window must be positive".into()));
            }
            if utc::parse_rfc3339(start).is_none() {
                return Err(Failure::Usage(format!("invalid --start `{start}`")));
            }
            let spec = CorpusSpec {
                seed: *seed,
                stations: *stations,
                hours: *hours,
                interval_seconds: *interval_seconds,
                start: start.clone(),
                window_seconds: *window_seconds,
                duplicate_rate: *duplicate_rate,
            };
            let path = corpus::write_corpus(out, &spec).map_err(io)?;
            let report = json!({ "config": path.display().to_string(), "stations": stations });
            emit(cli.json, &report, || format!("wrote corpus; config at {}\n", path.display()));
            Ok(())
        }
    }
}

fn cmd_run(cli: &Cli, flush_at_eof: bool) -> Result<(), Failure> {
    let cfg = load(&cli.config)?;
    let handle = cfg.open_ledger()?;
    let report = pipeline::run(&cfg, handle.as_ledger(), flush_at_eof).map_err(io)?;
    emit(cli.json, &report, || {
        let mut s = format!(
            "records: {}  late: {}  sealed: {}  anchored: {}  parked: {}  still open: {}\n",
            report.records_in,
            report.late_dropped,
            report.windows_sealed,
            report.anchored,
            report.parked,
            report.open_windows
        );
        for w in &report.sealed {
            s.push_str(&format!(
                "  {} -> {} ({} records){}\n",
                w.window_id,
                w.blockchain_stream,
                w.record_count,
                if w.anchored { "" } else { " [parked]" }
            ));
        }
        s
    });
    Ok(())
}

/// Opens the configured ledger for reading; an unavailable ledger leaves
/// the auditor with the mirror log only.
fn audit_ledger(cfg: &ToolConfig) -> Option<Arc<dyn Ledger>> {
    match cfg.open_ledger() {
        Ok(h) => Some(h.as_ledger()),
        Err(e) => {
            log::warn!("ledger unavailable, using the mirror log only: {e}");
            None
        }
    }
}

fn auditor_for(cfg: &ToolConfig, opts: &AuditOpts) -> Auditor {
    let mut a = Auditor::from_config(cfg, audit_ledger(cfg)).strict(opts.strict);
    if let Some(r) = &opts.results {
        a = a.with_results(r.clone());
    }
    a
}

fn verdict_text(v: &AuditVerdict) -> String {
    let mut s = format!("{} on {}: {:?}\n", v.window_id, v.stream, v.status);
    for (name, c) in v.checks.iter() {
        s.push_str(&format!("  {name:<17} {:?}", c.status));
        if c.failed() {
            if let (Some(e), Some(a)) = (&c.expected, &c.actual) {
                s.push_str(&format!("  expected {e} got {a}"));
            }
        }
        if let Some(d) = &c.detail {
            s.push_str(&format!("  ({d})"));
        }
        s.push('\n');
    }
    for n in &v.notes {
        s.push_str(&format!("  note: {n}\n"));
    }
    s
}

fn cmd_audit(cli: &Cli, cmd: &AuditCommand) -> Result<(), Failure> {
    let cfg = load(&cli.config)?;
    match cmd {
        AuditCommand::Window { id, stream, opts } => {
            let v = auditor_for(&cfg, opts).verify_window(id, stream);
            emit(cli.json, &v, || verdict_text(&v));
            if v.is_verified() {
                Ok(())
            } else {
                Err(Failure::Verification)
            }
        }
        AuditCommand::Record { id, record_file, stream } => {
            let text = std::fs::read_to_string(record_file).map_err(|e| Failure::Io(format!("{}: {e}", record_file.display())))?;
            let record = Record::from_json_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", record_file.display())))?;
            let a = Auditor::from_config(&cfg, audit_ledger(&cfg));
            let v = a.verify_record(id, stream.as_deref(), &record).map_err(io)?;
            emit(cli.json, &v, || {
                format!(
                    "{}: {:?} (leaf {}){}\n",
                    v.window_id,
                    v.status,
                    v.leaf,
                    v.detail.as_ref().map(|d| format!(" {d}")).unwrap_or_default()
                )
            });
            match v.status {
                MembershipStatus::Pass => Ok(()),
                MembershipStatus::Fail => Err(Failure::Verification),
            }
        }
        AuditCommand::All { streams, opts } => {
            let streams = if streams.is_empty() { cfg.streams() } else { streams.clone() };
            let summary: AuditSummary = auditor_for(&cfg, opts).verify_all(&streams);
            emit(cli.json, &summary, || {
                let mut s = format!(
                    "{} windows: {} verified, {} failed\n",
                    summary.total, summary.verified, summary.failed
                );
                for v in summary.verdicts.iter().filter(|v| !v.is_verified()) {
                    s.push_str(&verdict_text(v));
                }
                for e in &summary.errors {
                    s.push_str(&format!("  stream {}: {}\n", e.stream, e.error));
                }
                s
            });
            if summary.failed > 0 {
                Err(Failure::Verification)
            } else if !summary.errors.is_empty() {
                Err(Failure::Io("some streams could not be listed".into()))
            } else {
                Ok(())
            }
        }
    }
}

fn item_json(item: &StreamItem) -> Value {
    let value = match serde_json::from_slice::<Value>(&item.value) {
        Ok(v) => v,
        Err(_) => json!({ "hex": hex::encode(&item.value) }),
    };
    json!({
        "blockHeight": item.block_height,
        "blockIndex": item.block_index,
        "confirmedAt": utc::format_utc(item.confirmed_at),
        "key": item.key,
        "txid": item.txid,
        "value": value,
    })
}

fn cmd_ledger(cli: &Cli, cmd: &LedgerCommand) -> Result<(), Failure> {
    let cfg = load(&cli.config)?;
    let handle = cfg.open_ledger()?;
    match cmd {
        LedgerCommand::List { stream, from_height } => {
            let items = handle.as_ledger().list_items(stream, *from_height).map_err(io)?;
            let doc: Vec<Value> = items.iter().map(item_json).collect();
            emit(cli.json, &doc, || {
                items
                    .iter()
                    .map(|i| {
                        format!(
                            "{:>6}.{:<3} {} {} {}\n",
                            i.block_height,
                            i.block_index,
                            utc::format_utc(i.confirmed_at).unwrap_or_default(),
                            i.txid,
                            i.key
                        )
                    })
                    .collect()
            });
            Ok(())
        }
        LedgerCommand::SimTick { now, advance, settle } => {
            let LedgerHandle::Simulator(sim) = &handle else {
                return Err(Failure::Usage("sim-tick needs the simulator backend".into()));
            };
            let confirmations = if *settle {
                sim.settle_all()
            } else if let Some(now) = now {
                let t = now
                    .parse::<i64>()
                    .ok()
                    .or_else(|| utc::parse_rfc3339(now))
                    .ok_or_else(|| Failure::Usage(format!("invalid --now `{now}`")))?;
                sim.sim_tick(t)
            } else {
                sim.advance(advance.unwrap_or(sim.config().block_interval_seconds))
            }
            .map_err(io)?;
            let doc = json!({
                "now": utc::format_utc(sim.now()),
                "height": sim.height(),
                "pending": sim.pending_count(),
                "confirmed": confirmations.iter().map(|c| json!({
                    "txid": c.txid,
                    "stream": c.stream,
                    "blockHeight": c.block_height,
                    "confirmedAt": utc::format_utc(c.confirmed_at),
                    "miner": c.miner,
                })).collect::<Vec<_>>(),
            });
            emit(cli.json, &doc, || {
                format!(
                    "now {}  height {}  confirmed {}  pending {}\n",
                    utc::format_utc(sim.now()).unwrap_or_default(),
                    sim.height(),
                    confirmations.len(),
                    sim.pending_count()
                )
            });
            Ok(())
        }
    }
}

fn cmd_bench(cli: &Cli, cmd: &BenchCommand) -> Result<(), Failure> {
    match cmd {
        BenchCommand::Verify {
            corpus,
            reps,
            sizes,
            no_warm_up,
            out,
        } => {
            let config_path = corpus.join(corpus::CONFIG_FILE);
            let (auditor, windows) = if config_path.exists() {
                let cfg = load(&config_path)?;
                let auditor = Auditor::from_config(&cfg, None);
                let windows = streamseal::checkpoint::MirrorLog::read(&cfg.checkpoint_log_path())
                    .map_err(io)?
                    .into_iter()
                    .map(|e| (e.checkpoint.blockchain_stream, e.checkpoint.window_id))
                    .collect::<Vec<_>>();
                (auditor, windows)
            } else {
                std::fs::create_dir_all(corpus).map_err(io)?;
                bench::synthetic_corpus(corpus, sizes, 7).map_err(io)?
            };
            let result = bench::bench_verify(&auditor, &windows, *reps, !no_warm_up).map_err(|e| match e {
                bench::BenchError::InsufficientData(_) => Failure::Usage(e.to_string()),
                bench::BenchError::Unverified(_) => {
                    eprintln!("error: {e}");
                    Failure::Verification
                }
                other => io(other),
            })?;
            bench::export_latency_csv(&result.samples, out).map_err(io)?;
            let doc = json!({ "fit": result.fit, "samples": result.samples.len(), "outliers": result.outliers });
            emit(cli.json, &doc, || {
                format!(
                    "T(n) = {:.3} ns * n + {:.0} ns   R^2 = {:.4}   ({} windows, {} samples) -> {}\n",
                    result.fit.alpha,
                    result.fit.beta,
                    result.fit.r_squared,
                    result.fit.points,
                    result.samples.len(),
                    out.display()
                )
            });
            Ok(())
        }
        BenchCommand::Tps {
            workers,
            payload_bytes,
            tx,
            stream,
            use_config,
            capacity,
            block_byte_budget,
            block_interval,
            submit_latency_micros,
            out,
        } => {
            let configured = if *use_config {
                Some(load(&cli.config)?.open_ledger()?.as_ledger())
            } else {
                None
            };
            let mut reports: Vec<TpsReport> = Vec::new();
            for &bytes in payload_bytes {
                for &w in workers {
                    let ledger: Arc<dyn Ledger> = match &configured {
                        Some(l) => l.clone(),
                        None => Arc::new(SimulatorLedger::new(SimulatorConfig {
                            capacity: *capacity,
                            block_byte_budget: *block_byte_budget,
                            block_interval_seconds: *block_interval,
                            submit_latency_micros: *submit_latency_micros,
                            ..SimulatorConfig::default()
                        })),
                    };
                    reports.push(bench::bench_tps(ledger, stream, w, bytes, *tx).map_err(io)?);
                }
            }
            bench::export_tps_csv(&reports, out).map_err(io)?;
            emit(cli.json, &reports, || {
                reports
                    .iter()
                    .map(|r| {
                        format!(
                            "workers {:>3}  payload {:>6} B  confirmed {:>5}  tps {}  api tps {:.1}\n",
                            r.workers,
                            r.payload_bytes,
                            r.tx_count,
                            r.tps.map_or("n/a".to_string(), |t| format!("{t:.4}")),
                            r.api_tps
                        )
                    })
                    .collect()
            });
            Ok(())
        }
    }
}
