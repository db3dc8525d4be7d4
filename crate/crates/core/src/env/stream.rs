use serde::{Deserialize, Serialize};

use super::{validate_stream, CaseItem, EnvError, Feedback, StreamRecord};
use crate::memory::{AgentState, MemoryOp, DEFAULT_CAPACITY};
use crate::policy::{
    act, record_feedback, ActContext, Policy, PolicyError, PolicyOutput, PromptTemplate, RoundInput, DEFAULT_MAX_TURNS,
};
use crate::reward::{shaped_reward, RewardConfig};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    /// Independent cases; memory is fresh each round unless memory-augmented.
    Standard,
    /// One persistent memory across the whole stream.
    #[default]
    LongHorizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub mode: StreamMode,
    /// Standard mode only: carry memory across cases.
    pub memory_augmented: bool,
    pub capacity: usize,
    pub max_turns: u32,
    pub seed: u64,
    /// When set, every record carries its shaped reward.
    pub reward: Option<RewardConfig>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            mode: StreamMode::LongHorizon,
            memory_augmented: false,
            capacity: DEFAULT_CAPACITY,
            max_turns: DEFAULT_MAX_TURNS,
            seed: 0,
            reward: None,
        }
    }
}

impl StreamConfig {
    pub fn template(&self) -> PromptTemplate {
        match (self.mode, self.memory_augmented) {
            (StreamMode::LongHorizon, _) => PromptTemplate::LongHorizon,
            (StreamMode::Standard, true) => PromptTemplate::MemoryAugmented,
            (StreamMode::Standard, false) => PromptTemplate::Standard,
        }
    }

    pub fn carries_memory(&self) -> bool {
        self.mode == StreamMode::LongHorizon || self.memory_augmented
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.capacity == 0 {
            return Err(EnvError::InvalidConfig("memory capacity must be positive".into()));
        }
        if self.max_turns == 0 {
            return Err(EnvError::InvalidConfig("max_turns must be positive".into()));
        }
        if let Some(r) = &self.reward {
            r.validate()?;
        }
        Ok(())
    }

    /// Sampling seed for round `round`, rollout `rollout`.
    pub(crate) fn round_seed(&self, round: u64, rollout: u64) -> u64 {
        derive_seed(self.seed, &[round, rollout])
    }
}

/// Where and why a stream stopped early.
#[derive(Debug)]
pub struct StreamAbort {
    pub round_index: u64,
    pub case_id: String,
    pub error: PolicyError,
}

#[derive(Debug)]
pub struct StreamOutcome {
    pub records: Vec<StreamRecord>,
    /// Memory after the last completed round (the last round's isolated state
    /// in Standard mode without memory augmentation).
    pub final_state: AgentState,
    pub aborted: Option<StreamAbort>,
}

impl StreamOutcome {
    pub fn is_complete(&self) -> bool {
        self.aborted.is_none()
    }
}

/// One fully played round.
pub(crate) struct RoundPlay {
    pub input: RoundInput,
    pub output: PolicyOutput,
    pub feedback: Feedback,
    pub feedback_ops: Vec<MemoryOp>,
    /// Unrecoverable failure while the policy processed feedback.
    pub late_failure: Option<PolicyError>,
}

/// act, score, feedback, record_feedback. Recoverable failures score the
/// round incorrect with an empty prediction; an unrecoverable failure before
/// the answer is returned as `Err`.
pub(crate) fn play_round(
    policy: &dyn Policy,
    item: &CaseItem,
    state: &mut AgentState,
    round_index: u64,
    horizon: u64,
    template: PromptTemplate,
    ctx: &ActContext,
) -> Result<RoundPlay, PolicyError> {
    let input = RoundInput {
        case: item.case.presented(),
        candidates: item.candidates.clone(),
        memory_view: state.list_memory(),
        round_index,
        horizon,
        template,
    };
    let output = match act(policy, &input, state, ctx) {
        Ok(out) => out,
        Err(e) if e.error.is_recoverable() => {
            log::warn!("round {round_index} ({}): {}; scored incorrect", item.case.id, e.error);
            *e.partial
        }
        Err(e) => return Err(e.error),
    };
    if !output.prediction.is_empty() && !item.candidates.contains(&output.prediction) {
        log::debug!("round {round_index}: prediction {:?} is outside the candidate set", output.prediction);
    }
    let feedback = Feedback::score(&output.prediction, &item.case.gold_label);

    let (feedback_ops, late_failure) = match record_feedback(policy, &input, &output, &feedback, state, ctx) {
        Ok(ops) => (ops, None),
        Err(e) if e.error.is_recoverable() => {
            log::warn!("round {round_index}: memory update failed: {}", e.error);
            (e.partial.memory_ops, None)
        }
        Err(e) => (e.partial.memory_ops, Some(e.error)),
    };
    Ok(RoundPlay {
        input,
        output,
        feedback,
        feedback_ops,
        late_failure,
    })
}

pub(crate) fn make_record(
    round_index: u64,
    item: &CaseItem,
    play: &RoundPlay,
    state: &AgentState,
    horizon: u64,
    reward: Option<&RewardConfig>,
) -> Result<StreamRecord, EnvError> {
    let reward = reward
        .map(|cfg| {
            shaped_reward(
                play.feedback.correct,
                state.occupancy(),
                state.capacity(),
                round_index,
                horizon,
                cfg,
            )
        })
        .transpose()?;
    Ok(StreamRecord {
        round_index,
        case_id: item.case.id.clone(),
        prediction: play.output.prediction.clone(),
        correct: play.feedback.correct,
        occupancy_after: state.occupancy(),
        rules_after: state.long_term().len(),
        turns_used: play.output.turns_used,
        reward,
    })
}

/// Runs a single-pass stream. `sink` sees every record as soon as its round
/// completes, together with the memory at that point.
pub fn run_stream(
    policy: &dyn Policy,
    cases: &[CaseItem],
    cfg: &StreamConfig,
    mut sink: impl FnMut(&StreamRecord, &AgentState),
) -> Result<StreamOutcome, EnvError> {
    cfg.validate()?;
    validate_stream(cases)?;
    let horizon = cases.len() as u64;
    let template = cfg.template();
    let mut persistent = AgentState::new(cfg.capacity)?;
    let mut records = Vec::with_capacity(cases.len());

    for (i, item) in cases.iter().enumerate() {
        let round_index = i as u64 + 1;
        if !cfg.carries_memory() {
            persistent = AgentState::new(cfg.capacity)?;
        }
        let ctx = ActContext {
            seed: cfg.round_seed(round_index, 0),
            max_turns: cfg.max_turns,
        };
        let play = match play_round(policy, item, &mut persistent, round_index, horizon, template, &ctx) {
            Ok(p) => p,
            Err(error) => {
                return Ok(StreamOutcome {
                    records,
                    final_state: persistent,
                    aborted: Some(StreamAbort {
                        round_index,
                        case_id: item.case.id.clone(),
                        error,
                    }),
                })
            }
        };
        let record = make_record(round_index, item, &play, &persistent, horizon, cfg.reward.as_ref())?;
        sink(&record, &persistent);
        records.push(record);
        if let Some(error) = play.late_failure {
            return Ok(StreamOutcome {
                records,
                final_state: persistent,
                aborted: Some(StreamAbort {
                    round_index,
                    case_id: item.case.id.clone(),
                    error,
                }),
            });
        }
    }
    Ok(StreamOutcome {
        records,
        final_state: persistent,
        aborted: None,
    })
}
