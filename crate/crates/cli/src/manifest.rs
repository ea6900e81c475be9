//! Run manifest: written before any result, rewritten with checksums once
//! every output exists.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub workers: usize,
    /// Seed of the whole command, derived from the master seed.
    pub task_seed: u64,
    /// Seed of each grid cell, keyed by a label such as `lambda=2,s=64`.
    pub cell_seeds: BTreeMap<String, u64>,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: Option<f64>,
    pub complete: bool,
    /// Output file name to lowercase hex SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, workers: usize, task_seed: u64) -> Self {
        let started = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            artifact: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config: config.clone(),
            workers,
            task_seed,
            cell_seeds: BTreeMap::new(),
            started_unix_seconds: started,
            wall_clock_seconds: None,
            complete: false,
            outputs: BTreeMap::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(CliError::io(&path))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Corrupt {
            path: path.to_owned(),
            reason: format!("unreadable manifest: {e}"),
        })
    }

    /// Records checksums of `files` (relative to `dir`) and marks the run complete.
    pub fn seal(&mut self, dir: &Path, files: &[String], elapsed: f64) -> Result<(), CliError> {
        for name in files {
            self.outputs.insert(name.clone(), file_sha256(&dir.join(name))?);
        }
        self.wall_clock_seconds = Some(elapsed);
        self.complete = true;
        Ok(())
    }

    /// Checks completeness and every recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<(), CliError> {
        let manifest = dir.join(MANIFEST_FILE);
        if !self.complete {
            return Err(CliError::Corrupt {
                path: manifest,
                reason: "run did not complete".into(),
            });
        }
        for (name, expected) in &self.outputs {
            let path = dir.join(name);
            if &file_sha256(&path)? != expected {
                return Err(CliError::Corrupt {
                    path,
                    reason: "checksum does not match the manifest".into(),
                });
            }
        }
        Ok(())
    }
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
