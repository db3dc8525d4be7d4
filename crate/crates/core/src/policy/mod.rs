//! Policies and the round protocol they speak.
//!
//! A policy never touches [`AgentState`] directly: it receives a
//! [`MemorySession`] whose only mutating method applies a [`MemoryOp`] and logs
//! it. Replaying the logged ops on a copy of the pre-round state therefore
//! reproduces the post-round state exactly.

mod prompts;
mod remote;
mod scripted;
mod tool_schema;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{CandidateSet, Feedback, PresentedCase};
use crate::memory::{AgentState, MemoryOp, MemoryView, OpError, OpResult};
use crate::transport::{ChatClientConfig, ChatMessage, TransportError};

pub use prompts::{render_memory, render_prompt, PromptTemplate};
pub use remote::{parse_final_answer, RemotePolicy};
pub use scripted::{heuristic_prediction, Memoryless, NearestCase, NearestCaseConfig};
pub use tool_schema::{parse_tool_arguments, remote_tool_schema, MEMORY_TOOL_NAME};

/// Default cap on model turns (generation steps plus tool calls) per round.
pub const DEFAULT_MAX_TURNS: u32 = 10;

/// Everything the policy may condition on for one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundInput {
    pub case: PresentedCase,
    pub candidates: CandidateSet,
    pub memory_view: MemoryView,
    pub round_index: u64,
    pub horizon: u64,
    pub template: PromptTemplate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActContext {
    /// Per-rollout sampling seed.
    pub seed: u64,
    pub max_turns: u32,
}

impl Default for ActContext {
    fn default() -> Self {
        Self {
            seed: 0,
            max_turns: DEFAULT_MAX_TURNS,
        }
    }
}

/// The structured result of one round.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PolicyOutput {
    pub reasoning: String,
    pub prediction: String,
    pub memory_ops: Vec<MemoryOp>,
    pub turns_used: u32,
    /// Raw final answer as emitted (JSON with `reasoning` and `final_diagnosis`).
    pub response_text: String,
    /// Conversation so far, for policies that continue it after feedback.
    #[serde(skip)]
    pub transcript: Vec<ChatMessage>,
}

/// What a policy decides before the memory log is attached.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Decision {
    pub reasoning: String,
    pub prediction: String,
    pub turns_used: u32,
    pub response_text: String,
    pub transcript: Vec<ChatMessage>,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("turn budget of {max_turns} exhausted without a final answer")]
    TurnBudgetExhausted { max_turns: u32 },
    #[error("malformed final answer: {0}")]
    MalformedOutput(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Memory(#[from] OpError),
    #[error("policy initialization failed: {0}")]
    Init(String),
}

impl PolicyError {
    /// Rounds failing this way are scored incorrect and the stream continues.
    pub fn is_recoverable(&self) -> bool {
        !matches!(self, PolicyError::Transport(_) | PolicyError::Init(_))
    }
}

/// A failed round together with whatever it did to memory before failing.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RoundError {
    #[source]
    pub error: PolicyError,
    /// Ops applied before the failure; boxed to keep `Result`s small.
    pub partial: Box<PolicyOutput>,
}

/// Exclusive, logged access to the agent state for one policy call.
#[derive(Debug)]
pub struct MemorySession<'a> {
    state: &'a mut AgentState,
    ops: Vec<MemoryOp>,
}

impl<'a> MemorySession<'a> {
    pub fn new(state: &'a mut AgentState) -> Self {
        Self {
            state,
            ops: Vec::new(),
        }
    }

    pub fn state(&self) -> &AgentState {
        self.state
    }

    /// Applies `op`; only successful ops enter the log.
    pub fn apply(&mut self, op: MemoryOp) -> Result<OpResult, OpError> {
        let result = self.state.apply_op(&op)?;
        self.ops.push(op);
        Ok(result)
    }

    pub fn ops(&self) -> &[MemoryOp] {
        &self.ops
    }

    pub fn into_ops(self) -> Vec<MemoryOp> {
        self.ops
    }
}

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    /// Produces the round's diagnosis, issuing any memory ops through `memory`.
    fn decide(
        &self,
        input: &RoundInput,
        memory: &mut MemorySession<'_>,
        ctx: &ActContext,
    ) -> Result<Decision, PolicyError>;

    /// Reacts to feedback, typically by appending the case record.
    fn observe_feedback(
        &self,
        input: &RoundInput,
        output: &PolicyOutput,
        feedback: &Feedback,
        memory: &mut MemorySession<'_>,
        ctx: &ActContext,
    ) -> Result<(), PolicyError>;
}

/// Runs the decision half of a round.
pub fn act(
    policy: &dyn Policy,
    input: &RoundInput,
    memory: &mut AgentState,
    ctx: &ActContext,
) -> Result<PolicyOutput, RoundError> {
    let mut session = MemorySession::new(memory);
    let result = policy.decide(input, &mut session, ctx);
    let memory_ops = session.into_ops();
    match result {
        Ok(d) => Ok(PolicyOutput {
            reasoning: d.reasoning,
            prediction: d.prediction,
            memory_ops,
            turns_used: d.turns_used.min(ctx.max_turns),
            response_text: d.response_text,
            transcript: d.transcript,
        }),
        Err(error) => {
            let turns_used = match error {
                PolicyError::TurnBudgetExhausted { max_turns } => max_turns,
                _ => 0,
            };
            Err(RoundError {
                error,
                partial: Box::new(PolicyOutput {
                    memory_ops,
                    turns_used,
                    ..PolicyOutput::default()
                }),
            })
        }
    }
}

/// Runs the post-feedback half of a round. Returns the ops it applied.
pub fn record_feedback(
    policy: &dyn Policy,
    input: &RoundInput,
    output: &PolicyOutput,
    feedback: &Feedback,
    memory: &mut AgentState,
    ctx: &ActContext,
) -> Result<Vec<MemoryOp>, RoundError> {
    let mut session = MemorySession::new(memory);
    let result = policy.observe_feedback(input, output, feedback, &mut session, ctx);
    let memory_ops = session.into_ops();
    match result {
        Ok(()) => Ok(memory_ops),
        Err(error) => Err(RoundError {
            error,
            partial: Box::new(PolicyOutput {
                memory_ops,
                ..PolicyOutput::default()
            }),
        }),
    }
}

/// Policy selection as written in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Memoryless,
    NearestCase(NearestCaseConfig),
    Remote(ChatClientConfig),
}

impl PolicyKind {
    pub fn is_scripted(&self) -> bool {
        !matches!(self, PolicyKind::Remote(_))
    }

    pub fn build(&self, capacity: usize) -> Result<Box<dyn Policy>, PolicyError> {
        Ok(match self {
            PolicyKind::Memoryless => Box::new(Memoryless),
            PolicyKind::NearestCase(cfg) => Box::new(NearestCase::new(cfg.clone())?),
            PolicyKind::Remote(cfg) => Box::new(RemotePolicy::new(cfg.clone(), capacity)?),
        })
    }
}
