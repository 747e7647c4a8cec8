//! Run manifests: every command writes one, carrying the fully resolved
//! configuration, its hash, and the produced files, so a run can be
//! reproduced from the manifest alone.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub master_seed: u64,
    pub threads: usize,
    /// SHA-256 of `resolved_config_toml`; stable under re-serialization.
    pub config_sha256: String,
    /// The fully resolved configuration; feeding this back through
    /// `--config` reproduces the run byte for byte.
    pub resolved_config_toml: String,
    pub outputs: Vec<String>,
    pub started_at: String,
    pub wall_clock_seconds: f64,
    /// Per phase-length runtimes for experiment sweeps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_t_seconds: Option<Vec<(usize, f64)>>,
}

pub fn config_hash(resolved_toml: &str) -> String {
    let digest = Sha256::digest(resolved_toml.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, threads: usize, resolved_toml: String) -> Self {
        RunManifest {
            command: command.to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            threads,
            config_sha256: config_hash(&resolved_toml),
            resolved_config_toml: resolved_toml,
            outputs: Vec::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            wall_clock_seconds: 0.0,
            per_t_seconds: None,
        }
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(mut self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join("manifest.json");
        self.outputs.push(path.display().to_string());
        let json = serde_json::to_string_pretty(&self).context("serialize manifest")?;
        std::fs::write(&path, json)
            .with_context(|| format!("write manifest {}", path.display()))?;
        Ok(path)
    }
}
