use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Settings applied on top of the echoed configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

/// Output of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    /// The configuration document exactly as given.
    pub config: serde_json::Value,
    pub overrides: Overrides,
    pub artifact_version: String,
    pub seed: u64,
    pub wall_time: f64,
    pub payload: serde_json::Value,
    /// CSV files written next to the record (file names only).
    pub side_files: Vec<String>,
}

impl ResultRecord {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&raw)?)
    }

    pub fn file_name(experiment: &str, seed: u64) -> String {
        format!("{experiment}-{seed}.json")
    }
}

/// Write `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Rows of a CSV file as string maps keyed by header, for round-trip
/// checks of written side files.
pub fn read_csv_rows(path: impl AsRef<Path>) -> Result<Vec<std::collections::BTreeMap<String, String>>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(headers.iter().map(String::from).zip(rec.iter().map(String::from)).collect());
    }
    Ok(rows)
}
