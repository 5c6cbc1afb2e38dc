//! Record sources: NDJSON files, a seeded generator, and the merge of
//! several sources into one stream.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::canonical::Record;
use crate::config::{GeneratorSpec, SourceConfig};
use crate::utc;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("source `{0}` has neither a file nor a generator")]
    NoInput(String),
    #[error("generator for `{source_name}`: {message}")]
    Generator { source_name: String, message: String },
}

pub type RecordStream = Box<dyn Iterator<Item = Result<Record, IngestError>> + Send>;

/// Opens a configured source. Each yielded record carries its per-source
/// offset counter (0, 1, 2, ...) in its ingest metadata.
pub fn ingest(source: &SourceConfig, root: &Path) -> Result<RecordStream, IngestError> {
    match (&source.file, &source.generator) {
        (Some(file), _) => {
            let path = if file.is_absolute() { file.clone() } else { root.join(file) };
            Ok(Box::new(FileSource::open(&path, &source.name)?))
        }
        (None, Some(spec)) => Ok(Box::new(Generator::new(&source.name, spec)?.map(Ok))),
        (None, None) => Err(IngestError::NoInput(source.name.clone())),
    }
}

/// Streams records from an NDJSON file. Blank lines are skipped and do not
/// consume an offset.
pub struct FileSource {
    path: PathBuf,
    expected_source: String,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    next_offset: u64,
    failed: bool,
}

impl FileSource {
    pub fn open(path: &Path, expected_source: &str) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(FileSource {
            path: path.to_path_buf(),
            expected_source: expected_source.to_string(),
            lines: BufReader::new(file).lines(),
            line_no: 0,
            next_offset: 0,
            failed: false,
        })
    }

    fn parse_err(&self, message: String) -> IngestError {
        IngestError::Parse {
            path: self.path.clone(),
            line: self.line_no,
            message,
        }
    }
}

impl Iterator for FileSource {
    type Item = Result<Record, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(source) => {
                    self.failed = true;
                    return Some(Err(IngestError::Io {
                        path: self.path.clone(),
                        source,
                    }));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let result = Record::from_json_str(&line)
                .map_err(|e| self.parse_err(e.to_string()))
                .and_then(|mut r| {
                    if r.source_stream != self.expected_source {
                        return Err(self.parse_err(format!(
                            "sourceStream `{}` does not match source `{}`",
                            r.source_stream, self.expected_source
                        )));
                    }
                    r.set_offset(self.next_offset);
                    self.next_offset += 1;
                    Ok(r)
                });
            self.failed = result.is_err();
            return Some(result);
        }
    }
}

/// Seeded synthetic observations at a fixed cadence. Temperatures are
/// uniform in `[tempMin, tempMax]` rounded to 0.1 °C; with probability
/// `duplicateRate` an observation is re-emitted verbatim right after itself.
pub struct Generator {
    name: String,
    rng: ChaCha8Rng,
    start: i64,
    interval: i64,
    steps: u64,
    step: u64,
    temp_min: f64,
    temp_max: f64,
    duplicate_rate: f64,
    pending_duplicate: Option<Record>,
    next_offset: u64,
}

impl Generator {
    pub fn new(name: &str, spec: &GeneratorSpec) -> Result<Self, IngestError> {
        let err = |message: &str| IngestError::Generator {
            source_name: name.to_string(),
            message: message.to_string(),
        };
        let start = utc::parse_rfc3339(&spec.start).ok_or_else(|| err("invalid start timestamp"))?;
        if spec.interval_seconds == 0 {
            return Err(err("intervalSeconds must be positive"));
        }
        if !(spec.temp_min.is_finite() && spec.temp_max.is_finite() && spec.temp_min <= spec.temp_max) {
            return Err(err("temperature range is empty or not finite"));
        }
        if !(0.0..=1.0).contains(&spec.duplicate_rate) {
            return Err(err("duplicateRate must lie in [0, 1]"));
        }
        Ok(Generator {
            name: name.to_string(),
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            start,
            interval: spec.interval_seconds as i64,
            steps: spec.hours as u64 * 3600 / spec.interval_seconds as u64,
            step: 0,
            temp_min: spec.temp_min,
            temp_max: spec.temp_max,
            duplicate_rate: spec.duplicate_rate,
            pending_duplicate: None,
            next_offset: 0,
        })
    }

    fn stamp(&mut self, mut r: Record) -> Record {
        r.set_offset(self.next_offset);
        self.next_offset += 1;
        r
    }
}

impl Iterator for Generator {
    type Item = Record;

    fn next(&mut self) -> Option<Record> {
        if let Some(dup) = self.pending_duplicate.take() {
            return Some(self.stamp(dup));
        }
        if self.step >= self.steps {
            return None;
        }
        let t = self.start + self.step as i64 * self.interval;
        self.step += 1;
        let raw = if self.temp_min == self.temp_max {
            self.temp_min
        } else {
            self.rng.gen_range(self.temp_min..=self.temp_max)
        };
        let temp = (raw * 10.0).round() / 10.0;
        // -0.0 and 0.0 canonicalize identically, but keep the value tidy.
        let temp = if temp == 0.0 { 0.0 } else { temp };
        let record = Record::new(self.name.clone(), t, temp);
        if self.duplicate_rate > 0.0 && self.rng.gen_bool(self.duplicate_rate) {
            self.pending_duplicate = Some(record.clone());
        }
        Some(self.stamp(record))
    }
}

/// Interleaves several streams round-robin, one record from each in turn,
/// dropping streams as they run dry.
pub fn merge_sources(streams: Vec<RecordStream>) -> MergedStream {
    MergedStream {
        streams,
        cursor: 0,
    }
}

pub struct MergedStream {
    streams: Vec<RecordStream>,
    cursor: usize,
}

impl Iterator for MergedStream {
    type Item = Result<Record, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.streams.is_empty() {
            if self.cursor >= self.streams.len() {
                self.cursor = 0;
            }
            match self.streams[self.cursor].next() {
                Some(item) => {
                    self.cursor += 1;
                    return Some(item);
                }
                None => {
                    drop(self.streams.remove(self.cursor));
                }
            }
        }
        None
    }
}
