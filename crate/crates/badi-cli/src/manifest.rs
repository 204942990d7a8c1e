//! Run manifest: config echo and hash, input digests, timings, counts.
//! Any silent change to an input shows up as a digest change.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot read input {}", path.display()))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheInfo {
    pub key: String,
    pub hit: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub created_unix: u64,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub inputs: BTreeMap<String, InputDigest>,
    pub outputs: Vec<String>,
    /// Stage wall times in seconds.
    pub timings: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<CacheInfo>,
    pub status: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value) -> Self {
        let config_hash = sha256_hex(config.to_string().as_bytes());
        RunManifest {
            schema_version: 1,
            subcommand: subcommand.to_string(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config,
            config_hash,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            counts: BTreeMap::new(),
            notes: Vec::new(),
            cache: None,
            status: "ok".to_string(),
        }
    }

    pub fn add_input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.inputs.insert(name.to_string(), digest_file(path)?);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Accumulates named stage timings.
pub struct StageClock {
    start: Instant,
}

impl StageClock {
    pub fn start() -> Self {
        StageClock {
            start: Instant::now(),
        }
    }

    /// Records elapsed seconds under `stage` and restarts the clock.
    pub fn lap(&mut self, manifest: &mut RunManifest, stage: &str) {
        let elapsed = self.start.elapsed().as_secs_f64();
        manifest.timings.insert(stage.to_string(), elapsed);
        self.start = Instant::now();
    }
}
