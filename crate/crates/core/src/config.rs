//! Tool configuration file (TOML).
//!
//! Relative paths inside the file resolve against the file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::CanonicalConfig;
use crate::checkpoint::EmptyWindowPolicy;
use crate::ledger::{HttpTransport, Ledger, LedgerError, MultiChainLedger, SimulatorConfig, SimulatorLedger};
use crate::windowing::{WindowError, WindowSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ToolConfig {
    #[serde(default)]
    pub empty_window_policy: EmptyWindowPolicy,
    pub window: WindowSection,
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub region: Option<RegionSection>,
    pub ledger: LedgerSection,
    #[serde(default)]
    pub payload: PayloadSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub canonical: CanonicalSection,
    /// Directory the config was loaded from; not part of the file.
    #[serde(skip)]
    pub root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WindowSection {
    pub duration_seconds: u32,
    #[serde(default)]
    pub grace_seconds: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SourceConfig {
    pub name: String,
    /// Ledger stream receiving this source's checkpoints.
    pub blockchain_stream: String,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
}

/// Seeded synthetic weather observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    /// First event time, RFC 3339.
    pub start: String,
    pub hours: u32,
    pub interval_seconds: u32,
    #[serde(default = "default_temp_min")]
    pub temp_min: f64,
    #[serde(default = "default_temp_max")]
    pub temp_max: f64,
    /// Probability of re-emitting the previous observation verbatim.
    #[serde(default = "default_duplicate_rate")]
    pub duplicate_rate: f64,
}

fn default_temp_min() -> f64 {
    -5.0
}
fn default_temp_max() -> f64 {
    15.0
}
fn default_duplicate_rate() -> f64 {
    0.05
}

/// Merged view over all sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RegionSection {
    pub name: String,
    pub blockchain_stream: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Simulator,
    Multichain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LedgerSection {
    pub backend: Backend,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub chain_name: Option<String>,
    /// Simulator journal; in-memory when absent.
    #[serde(default)]
    pub journal: Option<PathBuf>,
    /// Confirm pending simulator items when a run finishes.
    #[serde(default = "default_true")]
    pub settle_on_exit: bool,
    #[serde(default)]
    pub simulator: SimulatorConfig,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PayloadSection {
    #[serde(default = "default_base_dir")]
    pub base_dir: String,
}

fn default_base_dir() -> String {
    "Files/payloads".into()
}

impl Default for PayloadSection {
    fn default() -> Self {
        PayloadSection {
            base_dir: default_base_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_output_dir(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CanonicalSection {
    #[serde(default)]
    pub exclude_fields: Vec<String>,
    #[serde(default)]
    pub timestamp_fields: Vec<String>,
}

pub const CHECKPOINT_LOG: &str = "checkpoints.ndjson";
pub const RESULTS_FILE: &str = "results.ndjson";
pub const RETRY_QUEUE: &str = "retry-queue.ndjson";

impl ToolConfig {
    pub fn load(path: &Path) -> Result<ToolConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let root = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        ToolConfig::from_toml(&text, root).map_err(|message| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Parses and validates; errors carry the offending key path.
    pub fn from_toml(text: &str, root: PathBuf) -> Result<ToolConfig, String> {
        let de = toml::Deserializer::new(text);
        let mut cfg: ToolConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().message().trim().to_string();
            if path == "." {
                inner
            } else {
                format!("at `{path}`: {inner}")
            }
        })?;
        cfg.root = root;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        if self.window.duration_seconds == 0 {
            return Err("at `window.durationSeconds`: must be positive".into());
        }
        if self.sources.is_empty() {
            return Err("at `sources`: at least one source is required".into());
        }
        let mut names = BTreeSet::new();
        for (i, s) in self.sources.iter().enumerate() {
            if s.name.is_empty() {
                return Err(format!("at `sources[{i}].name`: must be non-empty"));
            }
            if !names.insert(s.name.as_str()) {
                return Err(format!("at `sources[{i}].name`: duplicate source `{}`", s.name));
            }
            match (&s.file, &s.generator) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(format!(
                        "at `sources[{i}]`: exactly one of `file` or `generator` is required"
                    ))
                }
            }
            if let Some(g) = &s.generator {
                if g.interval_seconds == 0 {
                    return Err(format!("at `sources[{i}].generator.intervalSeconds`: must be positive"));
                }
                if !(g.temp_min.is_finite() && g.temp_max.is_finite()) || g.temp_min > g.temp_max {
                    return Err(format!("at `sources[{i}].generator`: tempMin..tempMax is not a finite range"));
                }
                if crate::utc::parse_rfc3339(&g.start).is_none() {
                    return Err(format!("at `sources[{i}].generator.start`: invalid timestamp"));
                }
            }
        }
        if let Some(r) = &self.region {
            if names.contains(r.name.as_str()) {
                return Err(format!("at `region.name`: `{}` collides with a source name", r.name));
            }
        }
        if self.ledger.backend == Backend::Multichain && self.ledger.endpoint.is_none()
            && std::env::var("STREAMSEAL_RPC_URL").is_err()
        {
            return Err("at `ledger.endpoint`: required for the multichain backend".into());
        }
        Ok(())
    }

    pub fn window_spec(&self) -> Result<WindowSpec, WindowError> {
        WindowSpec::new(self.window.duration_seconds, self.window.grace_seconds)
    }

    pub fn canonical_config(&self) -> CanonicalConfig {
        CanonicalConfig::new(
            self.canonical.exclude_fields.iter().cloned(),
            self.canonical.timestamp_fields.iter().cloned(),
        )
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn checkpoint_log_path(&self) -> PathBuf {
        self.output_dir().join(CHECKPOINT_LOG)
    }

    pub fn results_path(&self) -> PathBuf {
        self.output_dir().join(RESULTS_FILE)
    }

    pub fn retry_queue_path(&self) -> PathBuf {
        self.output_dir().join(RETRY_QUEUE)
    }

    /// All ledger streams the configuration publishes to.
    pub fn streams(&self) -> Vec<String> {
        let mut out: Vec<String> = self.sources.iter().map(|s| s.blockchain_stream.clone()).collect();
        if let Some(r) = &self.region {
            out.push(r.blockchain_stream.clone());
        }
        out.dedup();
        out
    }

    /// Opens the configured backend.
    pub fn open_ledger(&self) -> Result<LedgerHandle, ConfigError> {
        match self.ledger.backend {
            Backend::Simulator => {
                let sim = match &self.ledger.journal {
                    Some(j) => SimulatorLedger::open(self.ledger.simulator.clone(), self.resolve(j))?,
                    None => SimulatorLedger::new(self.ledger.simulator.clone()),
                };
                Ok(LedgerHandle::Simulator(Arc::new(sim)))
            }
            Backend::Multichain => {
                let transport = HttpTransport::from_env(self.ledger.endpoint.as_deref())?;
                let ledger = MultiChainLedger::new(
                    transport,
                    self.ledger.chain_name.clone(),
                    self.ledger.simulator.max_item_bytes,
                );
                Ok(LedgerHandle::Remote(Arc::new(ledger)))
            }
        }
    }
}

/// An opened backend; the simulator variant exposes its clock controls.
#[derive(Clone)]
pub enum LedgerHandle {
    Simulator(Arc<SimulatorLedger>),
    Remote(Arc<dyn Ledger>),
}

impl LedgerHandle {
    pub fn as_ledger(&self) -> Arc<dyn Ledger> {
        match self {
            LedgerHandle::Simulator(s) => s.clone(),
            LedgerHandle::Remote(r) => r.clone(),
        }
    }

    pub fn simulator(&self) -> Option<&Arc<SimulatorLedger>> {
        match self {
            LedgerHandle::Simulator(s) => Some(s),
            LedgerHandle::Remote(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[window]
durationSeconds = 7200

[[sources]]
name = "Berlin Brandenburg"
blockchainStream = "BrandenburgCheck"
file = "in/bb.ndjson"

[ledger]
backend = "simulator"
"#;

    #[test]
    fn minimal_defaults() {
        let cfg = ToolConfig::from_toml(MINIMAL, PathBuf::from("/data")).unwrap();
        assert_eq!(cfg.payload.base_dir, "Files/payloads");
        assert_eq!(cfg.empty_window_policy, EmptyWindowPolicy::Skip);
        assert_eq!(cfg.window.grace_seconds, 0);
        assert_eq!(cfg.ledger.simulator.block_interval_seconds, 15);
        assert_eq!(cfg.checkpoint_log_path(), PathBuf::from("/data/./checkpoints.ndjson"));
        assert_eq!(cfg.streams(), vec!["BrandenburgCheck".to_string()]);
    }

    #[test]
    fn unknown_key_is_path_qualified() {
        let text = MINIMAL.replace("durationSeconds = 7200", "durationSeconds = 7200\nsize = 3");
        let err = ToolConfig::from_toml(&text, PathBuf::new()).unwrap_err();
        assert!(err.contains("window"), "{err}");
        assert!(err.contains("size"), "{err}");

        let text = MINIMAL.replace("backend = \"simulator\"", "backend = \"simulator\"\n[ledger.simulator]\nblockTime = 3");
        let err = ToolConfig::from_toml(&text, PathBuf::new()).unwrap_err();
        assert!(err.contains("ledger.simulator"), "{err}");
    }

    #[test]
    fn missing_key_is_reported() {
        let text = MINIMAL.replace("blockchainStream = \"BrandenburgCheck\"\n", "");
        let err = ToolConfig::from_toml(&text, PathBuf::new()).unwrap_err();
        assert!(err.contains("sources") && err.contains("blockchainStream"), "{err}");
        let text = MINIMAL.replace("[ledger]\nbackend = \"simulator\"\n", "");
        let err = ToolConfig::from_toml(&text, PathBuf::new()).unwrap_err();
        assert!(err.contains("ledger"), "{err}");
    }

    #[test]
    fn semantic_validation() {
        let dup = format!("{MINIMAL}\n[[sources]]\nname = \"Berlin Brandenburg\"\nblockchainStream = \"X\"\nfile = \"b\"\n");
        // sources array split by the [ledger] table is still one array in TOML
        let err = ToolConfig::from_toml(&dup, PathBuf::new()).unwrap_err();
        assert!(err.contains("duplicate"), "{err}");
        let zero = MINIMAL.replace("7200", "0");
        assert!(ToolConfig::from_toml(&zero, PathBuf::new()).unwrap_err().contains("durationSeconds"));
        let neither = MINIMAL.replace("file = \"in/bb.ndjson\"\n", "");
        assert!(ToolConfig::from_toml(&neither, PathBuf::new()).unwrap_err().contains("exactly one"));
    }
}
