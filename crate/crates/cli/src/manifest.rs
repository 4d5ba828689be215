//! Run manifests: every artifact-producing command writes one JSON
//! manifest beside its primary output, recording the resolved
//! configuration, input hashes, output paths, tool version, and seed.
//! Reruns with identical inputs and seed produce manifests that are
//! byte-identical except for the timestamp.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use nvf_core::error::Result;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Resolved configuration snapshot (after flag overrides).
    pub config: serde_json::Value,
    /// sha256 per input, keyed by a stable label.
    pub input_hashes: Vec<(String, String)>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub seed: u64,
    /// Seconds since the Unix epoch; the only field allowed to differ
    /// between identical reruns.
    pub timestamp_unix_s: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            input_hashes: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn hash_file(&mut self, label: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.hash_bytes(label, &bytes);
        Ok(())
    }

    pub fn hash_bytes(&mut self, label: &str, bytes: &[u8]) {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        let hex: String =
            hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        self.input_hashes.push((label.to_string(), hex));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes `<primary_output>.manifest.json`.
    pub fn write_beside(&self, primary_output: &Path) -> Result<()> {
        let mut name = primary_output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = primary_output.with_file_name(name);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json)?;
        Ok(())
    }
}
