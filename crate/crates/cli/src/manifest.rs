use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::fail::Failure;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of `resolved_config`.
    pub config_digest: String,
    pub seed: u64,
    /// `network-i`, `network-ii`, `custom`, or empty when not applicable.
    pub preset: String,
    pub activation_ratios: Vec<f64>,
    pub output_dir: String,
    pub dataset_path: Option<String>,
    pub dataset_digest: Option<String>,
    /// Every setting the run used, as a config file.
    pub resolved_config: String,
    pub args: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub version: String,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn digest_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl RunManifest {
    pub fn new(command: &str, resolved_config: String, seed: u64, output_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            config_digest: digest_hex(&resolved_config),
            seed,
            preset: String::new(),
            activation_ratios: Vec::new(),
            output_dir: output_dir.display().to_string(),
            dataset_path: None,
            dataset_digest: None,
            resolved_config,
            args: std::env::args().collect(),
            started_unix: now_unix(),
            finished_unix: 0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn finish_and_write(mut self, path: &Path) -> Result<(), Failure> {
        self.finished_unix = now_unix();
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
