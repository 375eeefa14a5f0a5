//! Errors, exit codes, manifests and report files.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use concept_reasoner::datasets::LabeledDataset;
use concept_reasoner::training::{write_atomic, Checkpoint, TrainConfig};
use concept_reasoner::Error;
use serde::Serialize;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

fn kind_of(e: &Error) -> &'static str {
    match e {
        Error::Shape(_) => "shape",
        Error::Numeric(_) => "numeric",
        Error::Contract(_) => "contract",
        Error::Domain(_) => "domain",
        Error::EmptyRule => "empty_rule",
        Error::UndefinedMetric(_) => "undefined_metric",
        Error::Divergence { .. } => "divergence",
        Error::Config(_) => "config",
        Error::VersionMismatch { .. } => "version_mismatch",
        Error::AtTemperature { source, .. } => kind_of(source),
        Error::Parse(_) => "parse",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

fn code_of(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Config(_) => EXIT_USAGE,
        Error::Divergence { .. } | Error::Numeric(_) => EXIT_DIVERGENCE,
        Error::AtTemperature { source, .. } => code_of(source),
        _ => EXIT_DATA,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) => code_of(e),
        }
    }

    /// One-line JSON description for stderr.
    pub fn to_json(&self) -> String {
        let (kind, message) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Lib(e) => (kind_of(e), e.to_string()),
        };
        serde_json::json!({ "error": kind, "message": message, "exit_code": self.exit_code() }).to_string()
    }
}

/// Everything needed to rerun a command.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<TrainConfig>,
    pub seed: Option<u64>,
    pub artifacts: BTreeMap<String, PathBuf>,
    /// Seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub library_version: String,
}

impl Manifest {
    pub fn finish(mut self, path: &Path) -> Result<(), CliError> {
        self.artifacts.insert("manifest".into(), path.to_path_buf());
        write_json(path, &self)
    }
}

/// Collects phase timings of one command.
pub struct Reporter {
    command: &'static str,
    start: Instant,
    timings: RefCell<BTreeMap<String, f64>>,
}

impl Reporter {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            start: Instant::now(),
            timings: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn time<R>(&self, label: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let out = f();
        self.timings.borrow_mut().insert(label.to_string(), t.elapsed().as_secs_f64());
        out
    }

    pub fn manifest(&self) -> Manifest {
        let mut timings = self.timings.borrow().clone();
        timings.insert("total".into(), self.start.elapsed().as_secs_f64());
        Manifest {
            command: self.command.to_string(),
            args: std::env::args().collect(),
            config: None,
            seed: None,
            artifacts: BTreeMap::new(),
            timings,
            library_version: concept_reasoner::VERSION.to_string(),
        }
    }
}

/// `dir/run.csv` + `manifest.json` → `dir/run.manifest.json`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    ensure_parent(path)?;
    with_path(path, write_atomic(path, bytes))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(Error::from)?;
    for row in rows {
        w.write_record(row).map_err(Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_bytes(path, &bytes)
}

pub fn write_dataset(ds: &LabeledDataset, path: &Path) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    ds.write_csv(&mut bytes)?;
    write_bytes(path, &bytes)
}

/// Prefixes I/O errors with the offending path.
pub fn with_path<T>(path: &Path, result: concept_reasoner::Result<T>) -> Result<T, CliError> {
    result.map_err(|e| match e {
        Error::Io(io) => CliError::Lib(Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display())))),
        other => CliError::Lib(other),
    })
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset, CliError> {
    with_path(path, LabeledDataset::load_csv(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    with_path(path, Checkpoint::load(path))
}
