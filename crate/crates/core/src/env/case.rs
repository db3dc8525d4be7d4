use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::reward::RewardBreakdown;
use crate::text::normalize_label;

/// A patient case as held by the environment. The gold label never reaches
/// the policy; see [`PresentedCase`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientCase {
    pub id: String,
    pub profile: String,
    pub gold_label: String,
}

impl PatientCase {
    pub fn presented(&self) -> PresentedCase {
        PresentedCase {
            id: self.id.clone(),
            profile: self.profile.clone(),
        }
    }
}

/// What the policy sees of a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentedCase {
    pub id: String,
    pub profile: String,
}

/// Closed set of candidate labels for one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    descriptions: BTreeMap<String, String>,
}

impl CandidateSet {
    pub fn new(labels: Vec<String>) -> Result<Self, EnvError> {
        Self::with_descriptions(labels, BTreeMap::new())
    }

    pub fn with_descriptions(
        labels: Vec<String>,
        descriptions: BTreeMap<String, String>,
    ) -> Result<Self, EnvError> {
        if labels.is_empty() {
            return Err(EnvError::InvalidCandidates("candidate set is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            if label.trim().is_empty() {
                return Err(EnvError::InvalidCandidates("blank candidate label".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(EnvError::InvalidCandidates(format!("duplicate candidate {label:?}")));
            }
        }
        Ok(Self { labels, descriptions })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn descriptions(&self) -> &BTreeMap<String, String> {
        &self.descriptions
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of candidates matching `label` under [`match_prediction`].
    pub fn count_matching(&self, label: &str) -> usize {
        self.labels.iter().filter(|c| match_prediction(c, label)).count()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.count_matching(label) > 0
    }
}

/// A case paired with its candidate set; the gold label occurs exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseItem {
    pub case: PatientCase,
    pub candidates: CandidateSet,
}

impl CaseItem {
    pub fn new(case: PatientCase, candidates: CandidateSet) -> Result<Self, EnvError> {
        if case.id.trim().is_empty() {
            return Err(EnvError::InvalidCase("empty case id".into()));
        }
        if case.gold_label.trim().is_empty() {
            return Err(EnvError::InvalidCase(format!("case {} has an empty gold label", case.id)));
        }
        let hits = candidates.count_matching(&case.gold_label);
        if hits != 1 {
            return Err(EnvError::InvalidCandidates(format!(
                "case {}: gold label appears {hits} times in its candidate set",
                case.id
            )));
        }
        Ok(Self { case, candidates })
    }
}

/// Exact match after NFC normalization and trimming; case-sensitive.
pub fn match_prediction(prediction: &str, gold: &str) -> bool {
    normalize_label(prediction) == normalize_label(gold)
}

/// Environment feedback for one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub correct: bool,
    pub gold_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

const GROUND_TRUTH_MARKER: &str = "Ground truth: ";

impl Feedback {
    pub fn score(prediction: &str, gold: &str) -> Self {
        Self {
            correct: match_prediction(prediction, gold),
            gold_label: gold.to_owned(),
            note: None,
        }
    }

    /// Text stored in a case record, e.g. `Incorrect. Ground truth: Gout.`
    pub fn to_text(&self) -> String {
        let verdict = if self.correct { "Correct" } else { "Incorrect" };
        let mut text = format!("{verdict}. {GROUND_TRUTH_MARKER}{}.", self.gold_label);
        if let Some(note) = &self.note {
            text.push(' ');
            text.push_str(note);
        }
        text
    }
}

/// Recovers the ground-truth label from text produced by [`Feedback::to_text`].
pub fn parse_ground_truth(feedback_text: &str) -> Option<&str> {
    let start = feedback_text.find(GROUND_TRUTH_MARKER)? + GROUND_TRUTH_MARKER.len();
    let rest = &feedback_text[start..];
    // the label sentence ends at the first ". " (a note follows) or at the end
    let label = match rest.find(". ") {
        Some(end) => &rest[..end],
        None => rest.trim_end().strip_suffix('.').unwrap_or(rest),
    }
    .trim();
    (!label.is_empty()).then_some(label)
}

/// One row of the stream audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamRecord {
    pub round_index: u64,
    pub case_id: String,
    pub prediction: String,
    pub correct: bool,
    pub occupancy_after: usize,
    pub rules_after: usize,
    pub turns_used: u32,
    #[serde(default)]
    pub reward: Option<RewardBreakdown>,
}
