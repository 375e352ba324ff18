use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::episode::StreamRecord;
use super::stream::RNG_NAME;

/// JSON schema for [`RunManifest`].
pub const RUN_MANIFEST_SCHEMA: &str = include_str!("../../schemas/run_manifest.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::config(format!("unknown output format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Whatever parameters produced the run.
    pub spec: serde_json::Value,
    #[serde(rename = "git-describe")]
    pub git_describe: String,
    pub seed: u64,
    pub rng: String,
    pub records: Vec<StreamRecord>,
}

impl RunManifest {
    pub fn new(spec: &impl Serialize, seed: u64, records: Vec<StreamRecord>) -> Result<Self> {
        let spec = serde_json::to_value(spec).map_err(|e| Error::input(format!("cannot serialize run spec: {e}")))?;
        Ok(RunManifest { spec, git_describe: git_describe(), seed, rng: RNG_NAME.to_string(), records })
    }
}

/// `git describe --always --dirty` of the working directory, or `"unknown"`.
pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

/// CSV with header `t,loss,cum_loss,comparator_loss,comparator_cum,regret`.
/// Floats use shortest round-trip formatting.
pub fn write_csv_to<W: Write>(records: &[StreamRecord], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["t", "loss", "cum_loss", "comparator_loss", "comparator_cum", "regret"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[StreamRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    write_csv_to(records, BufWriter::new(file)).map_err(|source| Error::Csv { path: path.to_path_buf(), source })
}

pub fn read_csv(path: &Path) -> Result<Vec<StreamRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|source| Error::Csv { path: path.to_path_buf(), source })?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(|source| Error::Csv { path: path.to_path_buf(), source })
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, manifest).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

/// Writes `records` in `format`; the manifest form also records `spec` and `seed`.
pub fn export(records: Vec<StreamRecord>, path: &Path, format: Format, spec: &impl Serialize, seed: u64) -> Result<()> {
    match format {
        Format::Csv => write_csv(&records, path),
        Format::Json => write_manifest(&RunManifest::new(spec, seed, records)?, path),
    }
}
