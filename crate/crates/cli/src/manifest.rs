//! Run manifests: every output directory gets exactly one `manifest.json`
//! recording the command, its arguments, input digests, tool version, seed,
//! and wall-clock bounds. Primary outputs are reproducible byte-for-byte
//! for a fixed seed; manifests differ in timestamps only.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            inputs: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            started_unix: now_unix(),
            finished_unix: 0,
        }
    }

    /// Records the SHA-256 of an input file.
    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading {} for digest", path.display()))?;
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        self.inputs.insert(path.display().to_string(), hex);
        Ok(())
    }

    /// Stamps the end time and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished_unix = now_unix();
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self).context("serializing manifest")?;
        std::fs::write(&path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
