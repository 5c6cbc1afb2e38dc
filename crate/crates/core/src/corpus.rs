//! Synthetic weather corpus: per-station NDJSON input files plus a ready
//! to run configuration file.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::canonical;
use crate::config::{
    Backend, CanonicalSection, GeneratorSpec, LedgerSection, OutputSection, PayloadSection,
    RegionSection, SourceConfig, ToolConfig, WindowSection,
};
use crate::checkpoint::EmptyWindowPolicy;
use crate::ledger::SimulatorConfig;
use crate::source::Generator;

pub const CONFIG_FILE: &str = "streamseal.toml";

/// Stations as (source name, ledger stream).
pub fn station(i: usize) -> (String, String) {
    match i {
        0 => ("Berlin Brandenburg".into(), "BrandenburgCheck".into()),
        1 => ("Berlin-Tempelhof".into(), "TempelhofCheck".into()),
        n => (format!("Station-{}", n + 1), format!("Station{}Check", n + 1)),
    }
}

pub const REGION: (&str, &str) = ("Berlin", "BerlinCheck");

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub seed: u64,
    pub stations: usize,
    pub hours: u32,
    pub interval_seconds: u32,
    /// First event time, RFC 3339.
    pub start: String,
    pub window_seconds: u32,
    pub duplicate_rate: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 42,
            stations: 2,
            hours: 48,
            interval_seconds: 600,
            start: "2025-12-01T00:00:00Z".into(),
            window_seconds: 7200,
            duplicate_rate: 0.05,
        }
    }
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

/// Writes `input/<station>.ndjson` for every station and `streamseal.toml`
/// into `out`. Returns the config path.
pub fn write_corpus(out: &Path, spec: &CorpusSpec) -> io::Result<PathBuf> {
    let input = out.join("input");
    fs::create_dir_all(&input)?;
    let mut sources = Vec::new();
    for i in 0..spec.stations {
        let (name, stream) = station(i);
        let gen = GeneratorSpec {
            seed: spec.seed.wrapping_add(i as u64),
            start: spec.start.clone(),
            hours: spec.hours,
            interval_seconds: spec.interval_seconds,
            temp_min: -5.0,
            temp_max: 15.0,
            duplicate_rate: spec.duplicate_rate,
        };
        let generator = Generator::new(&name, &gen).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        let rel = PathBuf::from("input").join(format!("{}.ndjson", slug(&name)));
        let mut buf = Vec::new();
        for mut r in generator {
            r.ingest_meta = None;
            let value = r.to_json().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
            let line = canonical::to_canonical_json(&value)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
            writeln!(buf, "{line}")?;
        }
        fs::write(out.join(&rel), buf)?;
        sources.push(SourceConfig {
            name,
            blockchain_stream: stream,
            file: Some(rel),
            generator: None,
        });
    }
    let cfg = ToolConfig {
        empty_window_policy: EmptyWindowPolicy::Skip,
        window: WindowSection {
            duration_seconds: spec.window_seconds,
            grace_seconds: 0,
        },
        sources,
        region: (spec.stations > 1).then(|| RegionSection {
            name: REGION.0.into(),
            blockchain_stream: REGION.1.into(),
        }),
        ledger: LedgerSection {
            backend: Backend::Simulator,
            endpoint: None,
            chain_name: None,
            journal: Some(PathBuf::from("ledger/journal.ndjson")),
            settle_on_exit: true,
            simulator: SimulatorConfig::default(),
        },
        payload: PayloadSection::default(),
        output: OutputSection {
            dir: PathBuf::from("out"),
        },
        canonical: CanonicalSection::default(),
        root: PathBuf::new(),
    };
    let text = toml::to_string(&cfg).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    let path = out.join(CONFIG_FILE);
    fs::write(&path, text)?;
    Ok(path)
}
