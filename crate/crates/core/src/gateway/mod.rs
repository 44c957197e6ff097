//! Operational shell around the pipeline: configuration, atomic artifact
//! output, run logging, the file-backed review store and its HTTP service.

pub mod cli;
pub mod server;
pub mod store;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ecosystem::DEFAULT_MAX_HOPS;
use crate::register::SwanThresholds;
use crate::relation::Hyperparams;

/// Every tunable default, overridable from one TOML file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub taxonomy: TaxonomyConfig,
    pub relation: Hyperparams,
    pub register: SwanThresholds,
    pub ecosystem: EcosystemConfig,
    pub dynprob: DynprobConfig,
    pub server: ServerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaxonomyConfig {
    pub min_support: usize,
    pub attach_orphans: bool,
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        TaxonomyConfig {
            min_support: 1,
            attach_orphans: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcosystemConfig {
    pub max_hops: usize,
}

impl Default for EcosystemConfig {
    fn default() -> Self {
        EcosystemConfig {
            max_hops: DEFAULT_MAX_HOPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynprobConfig {
    pub alpha: f64,
}

impl Default for DynprobConfig {
    fn default() -> Self {
        DynprobConfig { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub page_size: usize,
    pub max_page_size: usize,
    /// Compact the judgment log into a snapshot after this many appends.
    pub snapshot_every: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1:8080".into(),
            page_size: 50,
            max_page_size: 500,
            snapshot_every: 100,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHash {
    pub path: String,
    pub sha256: String,
}

/// One CLI stage execution, appended to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    /// Hash of stage, arguments, input hashes and config hash.
    pub run_id: String,
    pub stage: String,
    pub started_at: DateTime<Utc>,
    pub wall_clock_secs: f64,
    pub inputs: Vec<ArtifactHash>,
    pub outputs: Vec<ArtifactHash>,
    pub config_sha256: String,
    pub config: Config,
}

/// Collects a stage's inputs and outputs. Outputs are held in memory and
/// written only by [`Stage::commit`], so a failing stage leaves no files.
pub struct Stage {
    name: String,
    args: Vec<String>,
    started: Instant,
    started_at: DateTime<Utc>,
    inputs: Vec<ArtifactHash>,
    outputs: BTreeMap<PathBuf, Vec<u8>>,
}

impl Stage {
    pub fn new(name: &str, args: Vec<String>) -> Stage {
        Stage {
            name: name.to_string(),
            args,
            started: Instant::now(),
            started_at: Utc::now(),
            inputs: Vec::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Reads an input file and records its hash.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(ArtifactHash {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn output(&mut self, path: &Path, bytes: Vec<u8>) {
        self.outputs.insert(path.to_path_buf(), bytes);
    }

    pub fn commit(self, config: &Config, run_log: Option<&Path>) -> Result<PipelineRun> {
        for (path, bytes) in &self.outputs {
            write_atomic(path, bytes)?;
        }
        let config_sha256 = sha256_hex(config.to_toml().as_bytes());
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for a in &self.args {
            h.update(b"\0");
            h.update(a.as_bytes());
        }
        for i in &self.inputs {
            h.update(b"\0");
            h.update(i.sha256.as_bytes());
        }
        h.update(config_sha256.as_bytes());
        let run = PipelineRun {
            run_id: hex::encode(&h.finalize()[..8]),
            stage: self.name,
            started_at: self.started_at,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            inputs: self.inputs,
            outputs: self
                .outputs
                .iter()
                .map(|(p, b)| ArtifactHash {
                    path: p.display().to_string(),
                    sha256: sha256_hex(b),
                })
                .collect(),
            config_sha256,
            config: config.clone(),
        };
        if let Some(log) = run_log {
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(log)
                .with_context(|| format!("opening run log {}", log.display()))?;
            let mut line = serde_json::to_vec(&run)?;
            line.push(b'\n');
            f.write_all(&line)?;
        }
        Ok(run)
    }
}
