//! Per-cell results persisted under `checkpoints/<fingerprint>/` so an
//! interrupted run resumes where it stopped.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Result;

pub struct Checkpoints {
    dir: Option<PathBuf>,
}

/// First 16 hex digits of the SHA-256 of the config JSON.
pub fn fingerprint(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(serde_json::to_vec(cfg).expect("config serializes"));
    format!("{digest:x}")[..16].to_string()
}

impl Checkpoints {
    pub fn new(out: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        let dir = out.join("checkpoints").join(fingerprint(cfg));
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir: Some(dir) })
    }

    /// A store that keeps nothing.
    pub fn disabled() -> Self {
        Self { dir: None }
    }

    pub fn load<T: DeserializeOwned>(&self, cell: &str) -> Option<T> {
        let path = self.dir.as_ref()?.join(format!("{cell}.json"));
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str(&text) {
            Ok(v) => {
                log::info!("resumed cell `{cell}` from {}", path.display());
                Some(v)
            }
            Err(e) => {
                log::warn!("ignoring unreadable checkpoint {}: {e}", path.display());
                None
            }
        }
    }

    pub fn store<T: Serialize>(&self, cell: &str, value: &T) -> Result<()> {
        if let Some(dir) = &self.dir {
            let tmp = dir.join(format!("{cell}.json.tmp"));
            std::fs::write(&tmp, serde_json::to_vec(value)?)?;
            std::fs::rename(tmp, dir.join(format!("{cell}.json")))?;
        }
        Ok(())
    }

    /// Cached value of `cell`, or the result of `compute`, stored on success.
    pub fn cached<T, F>(&self, cell: &str, compute: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        if let Some(v) = self.load(cell) {
            return Ok(v);
        }
        let v = compute()?;
        self.store(cell, &v)?;
        Ok(v)
    }
}
