use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Task};
use crate::error::CliError;
use crate::fsio::write_atomic;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundCount {
    pub round: u64,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub task: Task,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
    pub status: RunStatus,
    /// Report lines per round (trainer-export lines for rollout groups).
    pub round_records: Vec<RoundCount>,
}

impl RunManifest {
    pub fn begin(cfg: &RunConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            code_version: CODE_VERSION.to_owned(),
            task: cfg.task,
            started_at: now(),
            finished_at: 0,
            status: RunStatus::Aborted,
            round_records: Vec::new(),
        }
    }

    pub fn finish(mut self, status: RunStatus, path: &Path) -> Result<Self, CliError> {
        self.finished_at = now();
        self.status = status;
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        Ok(self)
    }
}

/// Wall-clock seconds, pinned by `SOURCE_DATE_EPOCH` for reproducible builds
/// of run artifacts.
pub fn now() -> u64 {
    if let Some(fixed) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()) {
        return fixed;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
