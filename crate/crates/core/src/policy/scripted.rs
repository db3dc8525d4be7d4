//! Deterministic stand-in policies.
//!
//! `Memoryless` never touches memory. `NearestCase` exercises the whole
//! action space: it lists memory before answering, appends every case after
//! feedback, and when the short-term cluster is full it pops the oldest case
//! and consolidates a templated rule from it.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ActContext, Decision, MemorySession, Policy, PolicyError, PolicyOutput, RoundInput};
use crate::env::{parse_ground_truth, CandidateSet, Feedback};
use crate::memory::{CaseRecord, MemoryOp, OpResult, Rule};
use crate::seed::{derive_seed, rng, stable_hash};
use crate::text::{overlap, token_set};

/// Candidate sharing the most case-insensitive tokens with `text`; ties go to
/// the lexicographically smallest label.
pub fn heuristic_prediction<'a>(text: &str, candidates: &'a CandidateSet) -> &'a str {
    let case_tokens = token_set(text);
    candidates
        .labels()
        .iter()
        .map(|label| (overlap(&token_set(label), &case_tokens), label))
        .max_by(|(oa, la), (ob, lb)| oa.cmp(ob).then_with(|| lb.cmp(la)))
        .map(|(_, label)| label.as_str())
        .expect("candidate sets are non-empty")
}

/// The candidate label matching `label`, as spelled in the candidate set.
fn in_candidates<'a>(label: &str, candidates: &'a CandidateSet) -> Option<&'a str> {
    candidates
        .labels()
        .iter()
        .find(|c| crate::env::match_prediction(c, label))
        .map(String::as_str)
}

fn answer_json(reasoning: &str, prediction: &str) -> String {
    json!({"reasoning": reasoning, "final_diagnosis": prediction}).to_string()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Memoryless;

impl Policy for Memoryless {
    fn name(&self) -> &str {
        "memoryless"
    }

    fn decide(
        &self,
        input: &RoundInput,
        _memory: &mut MemorySession<'_>,
        _ctx: &ActContext,
    ) -> Result<Decision, PolicyError> {
        let prediction = heuristic_prediction(&input.case.profile, &input.candidates).to_owned();
        let reasoning = "Selected the candidate with the largest token overlap with the profile.".to_owned();
        Ok(Decision {
            response_text: answer_json(&reasoning, &prediction),
            reasoning,
            prediction,
            turns_used: 1,
            transcript: Vec::new(),
        })
    }

    fn observe_feedback(
        &self,
        _input: &RoundInput,
        _output: &PolicyOutput,
        _feedback: &Feedback,
        _memory: &mut MemorySession<'_>,
        _ctx: &ActContext,
    ) -> Result<(), PolicyError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NearestCaseConfig {
    /// Probability of answering with a uniformly drawn candidate instead.
    /// Draws are keyed by the rollout seed and case id.
    pub explore_rate: f64,
    /// Minimum token overlap for a stored case or rule to count as a match.
    pub min_overlap: usize,
    /// Consult long-term rules when no stored case matches.
    pub use_rules: bool,
    /// Cap on cue tokens written into a consolidated rule.
    pub max_rule_cues: usize,
}

impl Default for NearestCaseConfig {
    fn default() -> Self {
        Self {
            explore_rate: 0.0,
            min_overlap: 2,
            use_rules: true,
            max_rule_cues: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NearestCase {
    cfg: NearestCaseConfig,
}

const RULE_PREFIX: &str = "Consider ";
const RULE_CUES: &str = " when findings include: ";

fn rule_text(label: &str, cues: &[String]) -> String {
    format!("{RULE_PREFIX}{label}{RULE_CUES}{}.", cues.join(", "))
}

fn parse_rule(text: &str) -> Option<(&str, Vec<String>)> {
    let rest = text.strip_prefix(RULE_PREFIX)?;
    let (label, cues) = rest.rsplit_once(RULE_CUES)?;
    let cues = cues
        .trim_end_matches('.')
        .split(", ")
        .filter(|c| !c.is_empty())
        .map(str::to_owned)
        .collect();
    Some((label, cues))
}

impl NearestCase {
    pub fn new(cfg: NearestCaseConfig) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&cfg.explore_rate) {
            return Err(PolicyError::Init("explore_rate must lie in [0, 1]".into()));
        }
        Ok(Self { cfg })
    }

    fn cues(&self, summary: &str) -> Vec<String> {
        let mut seen = std::collections::BTreeSet::new();
        crate::text::tokens(summary)
            .into_iter()
            .filter(|t| seen.insert(t.clone()))
            .take(self.cfg.max_rule_cues)
            .collect()
    }

    fn recall<'c>(
        &self,
        input: &RoundInput,
        view: &crate::memory::MemoryView,
        candidates: &'c CandidateSet,
    ) -> Option<(&'c str, String)> {
        let current = token_set(&input.case.profile);

        // most overlapping stored case; later cases win ties
        let best_case = view
            .cases
            .iter()
            .filter_map(|c| {
                let label = parse_ground_truth(&c.record.feedback)?;
                let score = overlap(&token_set(&c.record.case_summary), &current);
                Some((score, c.index, label))
            })
            .filter(|(score, _, _)| *score >= self.cfg.min_overlap)
            .max_by_key(|(score, index, _)| (*score, *index));
        if let Some((score, index, label)) = best_case {
            if let Some(hit) = in_candidates(label, candidates) {
                return Some((hit, format!("Stored case {index} shares {score} findings; its ground truth was {hit}.")));
            }
        }

        if !self.cfg.use_rules {
            return None;
        }
        // earlier rules win ties
        let best_rule = view
            .rules
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let (label, cues) = parse_rule(r.as_str())?;
                let score = cues.iter().filter(|c| current.contains(*c)).count();
                Some((score, std::cmp::Reverse(i), label))
            })
            .filter(|(score, _, _)| *score >= self.cfg.min_overlap)
            .max_by_key(|(score, i, _)| (*score, *i));
        let (score, std::cmp::Reverse(i), label) = best_rule?;
        let hit = in_candidates(label, candidates)?;
        Some((hit, format!("Rule {i} matches {score} findings and points to {hit}.")))
    }
}

impl Policy for NearestCase {
    fn name(&self) -> &str {
        "nearest_case"
    }

    fn decide(
        &self,
        input: &RoundInput,
        memory: &mut MemorySession<'_>,
        ctx: &ActContext,
    ) -> Result<Decision, PolicyError> {
        let view = match memory.apply(MemoryOp::List)? {
            OpResult::Listed { view } => view,
            _ => unreachable!("list always yields a view"),
        };

        let (mut prediction, mut reasoning) = match self.recall(input, &view, &input.candidates) {
            Some((label, why)) => (label.to_owned(), why),
            None => (
                heuristic_prediction(&input.case.profile, &input.candidates).to_owned(),
                "No matching experience; selected the candidate with the largest token overlap.".to_owned(),
            ),
        };

        if self.cfg.explore_rate > 0.0 {
            let mut r = rng(derive_seed(ctx.seed, &[stable_hash(&input.case.id)]));
            if r.random::<f64>() < self.cfg.explore_rate {
                let labels = input.candidates.labels();
                prediction = labels[r.random_range(0..labels.len())].clone();
                reasoning = "Exploratory sample from the candidate set.".to_owned();
            }
        }

        Ok(Decision {
            response_text: answer_json(&reasoning, &prediction),
            reasoning,
            prediction,
            turns_used: 2,
            transcript: Vec::new(),
        })
    }

    fn observe_feedback(
        &self,
        input: &RoundInput,
        output: &PolicyOutput,
        feedback: &Feedback,
        memory: &mut MemorySession<'_>,
        _ctx: &ActContext,
    ) -> Result<(), PolicyError> {
        if memory.state().is_full() {
            let evicted = match memory.apply(MemoryOp::Pop { indices: vec![0] })? {
                OpResult::Popped { evicted } => evicted,
                _ => unreachable!("pop yields evicted records"),
            };
            let rules = evicted
                .iter()
                .filter_map(|rec| {
                    let label = parse_ground_truth(&rec.feedback)?;
                    Rule::new(rule_text(label, &self.cues(&rec.case_summary))).ok()
                })
                .collect::<Vec<_>>();
            if !rules.is_empty() {
                memory.apply(MemoryOp::Consolidate { rules })?;
            }
        }

        let diagnosis = if output.prediction.trim().is_empty() {
            "(no answer)".to_owned()
        } else {
            output.prediction.clone()
        };
        let mut record = CaseRecord::new(input.case.profile.clone(), diagnosis, feedback.to_text());
        if !output.reasoning.is_empty() {
            record = record.with_rationale(output.reasoning.clone());
        }
        memory.apply(MemoryOp::Append { case_record: record })?;
        Ok(())
    }
}
