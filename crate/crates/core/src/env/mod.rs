//! The environment: case streams, scoring and feedback, rollout groups,
//! metrics, and the synthetic stream generator.

mod case;
mod groups;
pub mod io;
mod metrics;
mod stream;
pub mod synthetic;

use thiserror::Error;

pub use case::{
    match_prediction, parse_ground_truth, CandidateSet, CaseItem, Feedback, PatientCase, PresentedCase,
    StreamRecord,
};
pub use groups::{
    run_rollout_groups, GroupConfig, GroupOutcome, RolloutOutcome, RoundGroup, TrainerExportRecord,
};
pub use metrics::{
    cumulative_accuracy, cumulative_accuracy_of, delta_acc_at, delta_acc_of, final_accuracy, final_accuracy_of,
    MetricsError, StreamSummary, DEFAULT_WARMUP,
};
pub use stream::{run_stream, StreamAbort, StreamConfig, StreamMode, StreamOutcome};

use crate::memory::MemoryError;
use crate::reward::RewardError;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid candidate set: {0}")]
    InvalidCandidates(String),
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("stream has no cases")]
    EmptyStream,
    #[error("case id {0:?} occurs more than once")]
    DuplicateCaseId(String),
    #[error("group size must be at least 2, got {0}")]
    GroupTooSmall(usize),
    #[error("invalid stream config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Rejects empty streams and repeated case ids.
pub fn validate_stream(cases: &[CaseItem]) -> Result<(), EnvError> {
    if cases.is_empty() {
        return Err(EnvError::EmptyStream);
    }
    let mut seen = std::collections::HashSet::with_capacity(cases.len());
    for item in cases {
        if !seen.insert(item.case.id.as_str()) {
            return Err(EnvError::DuplicateCaseId(item.case.id.clone()));
        }
    }
    Ok(())
}
