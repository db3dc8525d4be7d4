use std::path::{Path, PathBuf};

use dxstream_core::env::{StreamMode, DEFAULT_WARMUP};
use dxstream_core::memory::DEFAULT_CAPACITY;
use dxstream_core::policy::{PolicyKind, DEFAULT_MAX_TURNS};
use dxstream_core::reward::RewardConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// One trajectory, one record per round.
    #[default]
    Evaluate,
    /// G rollouts per round plus the trainer export.
    RolloutGroups,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoPaths {
    pub cases: PathBuf,
    pub report: PathBuf,
    /// Directory receiving the memory snapshot after every round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainer_export: Option<PathBuf>,
    /// Defaults to the report path with `.manifest.json` appended.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: StreamMode,
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub memory_augmented: bool,
    pub policy: PolicyKind,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default = "default_capacity")]
    pub memory_capacity: usize,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default = "default_max_turns")]
    pub max_turns: u32,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default)]
    pub seed: u64,
    /// Prefix lengths reported as accuracy gains in the summary line.
    #[serde(default = "default_report_n")]
    pub report_n: Vec<usize>,
    #[serde(default)]
    pub normalize_advantages: bool,
    /// Run the rollouts of a round concurrently.
    #[serde(default = "default_true")]
    pub parallel_rollouts: bool,
    pub paths: IoPaths,
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}
fn default_group_size() -> usize {
    dxstream_core::advantage::DEFAULT_GROUP_SIZE
}
fn default_max_turns() -> u32 {
    DEFAULT_MAX_TURNS
}
fn default_warmup() -> usize {
    DEFAULT_WARMUP
}
fn default_report_n() -> Vec<usize> {
    vec![50, 100]
}
fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_owned()));
        if self.memory_capacity == 0 {
            return bad("memory_capacity must be positive");
        }
        if self.max_turns == 0 {
            return bad("max_turns must be positive");
        }
        if self.warmup == 0 {
            return bad("warmup must be positive");
        }
        if self.task == Task::RolloutGroups && self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if self.group_size == 0 {
            return bad("group_size must be positive");
        }
        if self.report_n.contains(&0) {
            return bad("report_n entries must be positive");
        }
        if self.task == Task::RolloutGroups && self.paths.trainer_export.is_none() {
            return bad("rollout_groups needs paths.trainer_export");
        }
        self.reward
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let PolicyKind::NearestCase(nc) = &self.policy {
            if !(0.0..=1.0).contains(&nc.explore_rate) {
                return bad("policy.explore_rate must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form: defaults filled in, object keys
    /// sorted, no whitespace. `parallel_rollouts` is left out since it cannot
    /// change any output.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("parallel_rollouts");
        }
        let canonical = serde_json::to_string(&value).expect("values serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Paths made absolute against the directory holding the config file.
    pub fn resolve_paths(&self, config_dir: &Path) -> IoPaths {
        let abs = |p: &Path| if p.is_absolute() { p.to_owned() } else { config_dir.join(p) };
        let report = abs(&self.paths.report);
        let manifest = match &self.paths.manifest {
            Some(m) => abs(m),
            None => {
                let mut name = report.clone().into_os_string();
                name.push(".manifest.json");
                PathBuf::from(name)
            }
        };
        IoPaths {
            cases: abs(&self.paths.cases),
            report,
            snapshots: self.paths.snapshots.as_deref().map(abs),
            trainer_export: self.paths.trainer_export.as_deref().map(abs),
            manifest: Some(manifest),
        }
    }
}
