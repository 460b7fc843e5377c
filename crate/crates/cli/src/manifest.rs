//! Run manifest: every artifact a stage writes is recorded with its SHA-256
//! so a run can be audited and stages can be re-run incrementally. The
//! config file text is echoed verbatim for provenance.

use crate::error::{CliError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub seed: u64,
    pub config_toml: String,
    /// file name (relative to the output directory) → SHA-256 hex digest
    pub files: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Stage {
        stage: "manifest",
        message: format!("reading {}: {e}", path.display()),
    })?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.json")
}

impl Manifest {
    /// Loads the manifest from `out_dir`, or starts a fresh one. A fresh or
    /// reloaded manifest always takes the current seed and config echo.
    pub fn load_or_new(out_dir: &Path, seed: u64, config_toml: &str) -> Manifest {
        let mut m = std::fs::read_to_string(manifest_path(out_dir))
            .ok()
            .and_then(|text| serde_json::from_str::<Manifest>(&text).ok())
            .unwrap_or_default();
        m.seed = seed;
        m.config_toml = config_toml.to_string();
        m
    }

    /// Hashes a freshly written artifact and records it.
    pub fn record(&mut self, out_dir: &Path, name: &str) -> Result<()> {
        let digest = sha256_file(&out_dir.join(name))?;
        self.files.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::Stage {
            stage: "manifest",
            message: format!("serializing manifest: {e}"),
        })?;
        std::fs::write(manifest_path(out_dir), json).map_err(|e| CliError::Stage {
            stage: "manifest",
            message: format!("writing manifest: {e}"),
        })
    }

    /// Re-hashes every listed file; returns the names that do not match.
    pub fn verify(&self, out_dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for (name, digest) in &self.files {
            if sha256_file(&out_dir.join(name))? != *digest {
                bad.push(name.clone());
            }
        }
        Ok(bad)
    }
}
