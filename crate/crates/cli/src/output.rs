//! Files written by the runner: manifest, summaries, CSV tables and the
//! per-replicate results that make interrupted runs resumable.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    fs::write(path, json_bytes(value)).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Core(bde::Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    })
}

/// Writes a CSV with a header row; cells are formatted by the caller.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    let io_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One stream handed to a component, so a run can be reproduced piecewise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub component: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub source: String,
    pub rows: usize,
    pub features: usize,
    pub digest: String,
}

/// Everything needed to re-run an experiment exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config_digest: String,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetInfo>,
    pub seeds: Vec<SeedRecord>,
    /// Choices that depart from the full-scale protocol.
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(experiment: &str, config: &ExperimentConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: experiment.to_string(),
            config_digest: config.digest(),
            config: config.clone(),
            dataset: None,
            seeds: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn seed(&mut self, component: impl Into<String>, seed: u64) {
        self.seeds.push(SeedRecord {
            component: component.into(),
            seed,
        });
    }
}

/// Per-replicate results stored as `rep_NNNN.json` with a `.sha256`
/// sidecar. A stored replicate is reused only if its hash checks out and it
/// was produced under the same configuration digest.
pub struct ReplicateStore {
    dir: PathBuf,
    config_digest: String,
}

#[derive(Serialize, Deserialize)]
struct Stored<T> {
    config_digest: String,
    replicate: usize,
    result: T,
}

impl ReplicateStore {
    pub fn new(dir: impl Into<PathBuf>, config_digest: &str) -> Result<Self> {
        let dir = dir.into();
        create_dir(&dir)?;
        Ok(ReplicateStore {
            dir,
            config_digest: config_digest.to_string(),
        })
    }

    fn paths(&self, r: usize) -> (PathBuf, PathBuf) {
        let data = self.dir.join(format!("rep_{r:04}.json"));
        let hash = self.dir.join(format!("rep_{r:04}.json.sha256"));
        (data, hash)
    }

    /// The stored result for replicate `r`, if present and valid.
    pub fn load<T: DeserializeOwned>(&self, r: usize) -> Option<T> {
        let (data, hash) = self.paths(r);
        let bytes = fs::read(&data).ok()?;
        let expected = fs::read_to_string(&hash).ok()?;
        if expected.trim() != sha256_hex(&bytes) {
            return None;
        }
        let stored: Stored<T> = serde_json::from_slice(&bytes).ok()?;
        (stored.config_digest == self.config_digest && stored.replicate == r).then_some(stored.result)
    }

    pub fn store<T: Serialize>(&self, r: usize, result: &T) -> Result<()> {
        let (data, hash) = self.paths(r);
        let bytes = json_bytes(&Stored {
            config_digest: self.config_digest.clone(),
            replicate: r,
            result,
        });
        fs::write(&data, &bytes).map_err(|e| CliError::io(&data, e))?;
        fs::write(&hash, format!("{}\n", sha256_hex(&bytes))).map_err(|e| CliError::io(&hash, e))
    }
}

/// Shortest round-trip formatting for CSV cells.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicate_store_round_trips_and_rejects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplicateStore::new(dir.path(), "abc").unwrap();
        assert_eq!(store.load::<Vec<f64>>(0), None);
        store.store(0, &vec![1.5, 2.0]).unwrap();
        assert_eq!(store.load::<Vec<f64>>(0), Some(vec![1.5, 2.0]));

        let other = ReplicateStore::new(dir.path(), "def").unwrap();
        assert_eq!(other.load::<Vec<f64>>(0), None);

        let path = dir.path().join("rep_0000.json");
        let text = fs::read_to_string(&path).unwrap().replace("1.5", "1.6");
        fs::write(&path, text).unwrap();
        assert_eq!(store.load::<Vec<f64>>(0), None);
    }

    #[test]
    fn table_writer_quotes_nothing_numeric() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_table(&path, &["a", "b"], vec![vec![fmt(0.1), fmt(2.0)]]).unwrap();
        assert_eq!(fs::read_to_string(path).unwrap(), "a,b\n0.1,2\n");
    }
}
