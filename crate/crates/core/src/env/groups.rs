//! Group sampling: G rollouts per round from copies of one shared state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stream::{make_record, play_round};
use super::{validate_stream, CaseItem, EnvError, StreamConfig, StreamRecord};
use crate::advantage::{group_advantages_with, AdvantageConfig, RolloutGroup, DEFAULT_GROUP_SIZE};
use crate::memory::{AgentState, MemoryOp};
use crate::policy::{render_prompt, ActContext, Policy, PolicyOutput};
use crate::reward::{RewardBreakdown, RewardConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupConfig {
    /// Mode, capacity, turn budget and base seed. Its `reward` is ignored.
    pub stream: StreamConfig,
    pub group_size: usize,
    pub reward: RewardConfig,
    pub advantage: AdvantageConfig,
    /// Run the rollouts of a round on the rayon pool.
    pub parallel: bool,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self {
            stream: StreamConfig::default(),
            group_size: DEFAULT_GROUP_SIZE,
            reward: RewardConfig::default(),
            advantage: AdvantageConfig::default(),
            parallel: true,
        }
    }
}

/// One surviving rollout of a round.
#[derive(Debug, Clone)]
pub struct RolloutOutcome {
    pub rollout_id: usize,
    pub output: PolicyOutput,
    pub feedback_ops: Vec<MemoryOp>,
    pub reward: RewardBreakdown,
    pub record: StreamRecord,
    pub prompt_hash: String,
    pub post_state: AgentState,
}

impl RolloutOutcome {
    /// Every op the rollout applied, in order.
    pub fn all_ops(&self) -> impl Iterator<Item = &MemoryOp> {
        self.output.memory_ops.iter().chain(&self.feedback_ops)
    }
}

#[derive(Debug, Clone)]
pub struct RoundGroup {
    pub round_index: u64,
    pub case_id: String,
    /// Snapshot of the shared state every rollout started from.
    pub pre_snapshot: Vec<u8>,
    /// Surviving rollouts in id order.
    pub rollouts: Vec<RolloutOutcome>,
    /// `(rollout_id, error)` for rollouts lost to unrecoverable failures.
    pub failed: Vec<(usize, String)>,
    /// Present when at least two rollouts survived.
    pub group: Option<RolloutGroup>,
    pub advantages: Vec<f64>,
    /// Rollout whose post-state carries into the next round.
    pub committed: Option<usize>,
}

/// One line of the trainer export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerExportRecord {
    pub round: u64,
    pub group_id: u64,
    pub rollout_id: usize,
    pub reward: f64,
    pub advantage: f64,
    /// Hex SHA-256 of the rendered prompt.
    pub prompt_hash: String,
    pub response_text: String,
}

impl TrainerExportRecord {
    /// Strict parse of one export line.
    pub fn parse_line(line: &str) -> Result<Self, String> {
        let rec: Self = serde_json::from_str(line).map_err(|e| e.to_string())?;
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.round == 0 {
            return Err("round must be >= 1".into());
        }
        if !self.reward.is_finite() || !self.advantage.is_finite() {
            return Err("reward and advantage must be finite".into());
        }
        let hex_ok = self.prompt_hash.len() == 64
            && self.prompt_hash.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !hex_ok {
            return Err(format!("prompt_hash {:?} is not a lowercase sha256 hex digest", self.prompt_hash));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct GroupOutcome {
    pub rounds: Vec<RoundGroup>,
    pub export: Vec<TrainerExportRecord>,
    /// The committed rollout's record for each round.
    pub records: Vec<StreamRecord>,
    pub final_state: AgentState,
}

impl GroupOutcome {
    /// Groups that survived, in round order.
    pub fn groups(&self) -> Vec<RolloutGroup> {
        self.rounds.iter().filter_map(|r| r.group.clone()).collect()
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Highest total reward; ties go to the lowest rollout id.
pub fn committed_rollout(rollouts: &[RolloutOutcome]) -> Option<usize> {
    rollouts
        .iter()
        .max_by(|a, b| {
            a.reward
                .total
                .total_cmp(&b.reward.total)
                .then_with(|| b.rollout_id.cmp(&a.rollout_id))
        })
        .map(|r| r.rollout_id)
}

/// Samples `group_size` rollouts per round, each from its own deep copy of
/// the committed state, scores them, centers rewards within the group, and
/// commits one rollout's post-state to the next round.
pub fn run_rollout_groups(
    policy: &dyn Policy,
    cases: &[CaseItem],
    cfg: &GroupConfig,
) -> Result<GroupOutcome, EnvError> {
    cfg.stream.validate()?;
    cfg.reward.validate()?;
    validate_stream(cases)?;
    if cfg.group_size < 2 {
        return Err(EnvError::GroupTooSmall(cfg.group_size));
    }
    let horizon = cases.len() as u64;
    let template = cfg.stream.template();
    let mut committed_state = AgentState::new(cfg.stream.capacity)?;
    let mut rounds = Vec::with_capacity(cases.len());
    let mut export = Vec::new();
    let mut records = Vec::with_capacity(cases.len());
    let mut group_id = 0u64;

    for (i, item) in cases.iter().enumerate() {
        let round_index = i as u64 + 1;
        if !cfg.stream.carries_memory() {
            committed_state = AgentState::new(cfg.stream.capacity)?;
        }
        let pre = &committed_state;
        let pre_snapshot = pre.snapshot();

        let rollout = |k: usize| -> Result<Result<RolloutOutcome, String>, EnvError> {
            let mut state = pre.clone();
            let ctx = ActContext {
                seed: cfg.stream.round_seed(round_index, k as u64),
                max_turns: cfg.stream.max_turns,
            };
            let play = match play_round(policy, item, &mut state, round_index, horizon, template, &ctx) {
                Ok(p) => p,
                Err(e) => return Ok(Err(e.to_string())),
            };
            if let Some(e) = &play.late_failure {
                return Ok(Err(e.to_string()));
            }
            let record = make_record(round_index, item, &play, &state, horizon, Some(&cfg.reward))?;
            Ok(Ok(RolloutOutcome {
                rollout_id: k,
                prompt_hash: prompt_hash(&render_prompt(&play.input)),
                reward: record.reward.expect("reward config was supplied"),
                output: play.output,
                feedback_ops: play.feedback_ops,
                record,
                post_state: state,
            }))
        };
        let results: Vec<Result<RolloutOutcome, String>> = if cfg.parallel {
            (0..cfg.group_size).into_par_iter().map(rollout).collect::<Result<_, _>>()?
        } else {
            (0..cfg.group_size).map(rollout).collect::<Result<_, _>>()?
        };

        let mut survivors = Vec::new();
        let mut failed = Vec::new();
        for (k, r) in results.into_iter().enumerate() {
            match r {
                Ok(o) => survivors.push(o),
                Err(e) => {
                    log::warn!("round {round_index}: rollout {k} failed: {e}");
                    failed.push((k, e));
                }
            }
        }

        let committed = committed_rollout(&survivors);
        let (group, advantages) = if survivors.len() >= 2 {
            let group = RolloutGroup::new(round_index, survivors.iter().map(|o| o.reward.total).collect())
                .map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
            let adv = group_advantages_with(&group, cfg.advantage)
                .map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
            for (o, a) in survivors.iter().zip(&adv) {
                export.push(TrainerExportRecord {
                    round: round_index,
                    group_id,
                    rollout_id: o.rollout_id,
                    reward: o.reward.total,
                    advantage: *a,
                    prompt_hash: o.prompt_hash.clone(),
                    response_text: o.output.response_text.clone(),
                });
            }
            group_id += 1;
            (Some(group), adv)
        } else {
            log::warn!(
                "round {round_index}: only {} of {} rollouts survived; group dropped",
                survivors.len(),
                cfg.group_size
            );
            (None, Vec::new())
        };

        match committed.and_then(|id| survivors.iter().find(|o| o.rollout_id == id)) {
            Some(winner) => {
                records.push(winner.record.clone());
                committed_state = winner.post_state.clone();
            }
            None => records.push(StreamRecord {
                round_index,
                case_id: item.case.id.clone(),
                prediction: String::new(),
                correct: false,
                occupancy_after: committed_state.occupancy(),
                rules_after: committed_state.long_term().len(),
                turns_used: 0,
                reward: None,
            }),
        }

        rounds.push(RoundGroup {
            round_index,
            case_id: item.case.id.clone(),
            pre_snapshot,
            rollouts: survivors,
            failed,
            group,
            advantages,
            committed,
        });
    }

    Ok(GroupOutcome {
        rounds,
        export,
        records,
        final_state: committed_state,
    })
}
