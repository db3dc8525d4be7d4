//! Harness for diagnostic agents with a bounded dual memory.
//!
//! The agent keeps a short-term cluster of recent case records and a
//! long-term list of distilled rules, and manipulates both through four tool
//! operations. This crate holds the memory state machine, per-round reward
//! shaping, group-relative advantages and the clipped surrogate objective,
//! policies (scripted and remote), candidate-set construction, and the
//! streaming environment with its metrics.

pub mod advantage;
pub mod candidates;
pub mod env;
pub mod memory;
pub mod policy;
pub mod reward;
pub mod seed;
pub mod text;
pub mod transport;

pub use advantage::{
    advantages_by_round, clipped_objective, group_advantages, AdvantageConfig, ObjectiveInputs, RolloutGroup,
};
pub use candidates::{build_candidates, lexical_relatedness, LabelPool, LexicalScorer, RelatednessScorer};
pub use env::{
    run_rollout_groups, run_stream, CandidateSet, CaseItem, Feedback, PatientCase, StreamConfig, StreamMode,
    StreamRecord, StreamSummary,
};
pub use memory::{AgentState, CaseRecord, MemoryOp, MemoryView, Rule};
pub use policy::{Policy, PolicyKind, PolicyOutput};
pub use reward::{shaped_reward, RewardBreakdown, RewardConfig};
