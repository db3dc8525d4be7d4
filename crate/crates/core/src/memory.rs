//! Dual-memory state machine.
//!
//! The agent state is a bounded short-term cluster of outcome-annotated case
//! records plus an unbounded long-term cluster of distilled rules. All
//! mutation goes through four operations (`list`, `append`, `pop`,
//! `consolidate`), each of which is deterministic and atomic: a failing
//! operation leaves the state untouched.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Short-term capacity used when a configuration does not name one.
pub const DEFAULT_CAPACITY: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("short-term memory is full ({capacity} cases); pop before appending")]
    CapacityExceeded { capacity: usize },
    #[error("index {index} out of range for {len} short-term cases")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("index {index} appears more than once")]
    DuplicateIndex { index: usize },
    #[error("consolidate requires at least one rule")]
    EmptyRuleList,
    #[error("rule text is empty after trimming")]
    EmptyRuleText,
    #[error("invalid case record: {0} must be non-empty")]
    InvalidRecord(&'static str),
    #[error("capacity must be positive")]
    InvalidCapacity,
    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),
}

/// One outcome-annotated past case.
///
/// Serialized field names follow the memory tool's `case_record` object; the
/// optional rationale travels under `reasoning`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_summary: String,
    pub diagnosis: String,
    pub feedback: String,
    #[serde(rename = "reasoning", default)]
    pub rationale: Option<String>,
}

impl CaseRecord {
    pub fn new(
        case_summary: impl Into<String>,
        diagnosis: impl Into<String>,
        feedback: impl Into<String>,
    ) -> Self {
        Self {
            case_summary: case_summary.into(),
            diagnosis: diagnosis.into(),
            feedback: feedback.into(),
            rationale: None,
        }
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = Some(rationale.into());
        self
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.case_summary.trim().is_empty() {
            return Err(MemoryError::InvalidRecord("case_summary"));
        }
        if self.diagnosis.trim().is_empty() {
            return Err(MemoryError::InvalidRecord("diagnosis"));
        }
        if self.feedback.trim().is_empty() {
            return Err(MemoryError::InvalidRecord("feedback"));
        }
        Ok(())
    }
}

/// A concise reusable diagnostic statement. Stored trimmed; never empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Rule(String);

impl Rule {
    pub fn new(text: impl AsRef<str>) -> Result<Self, MemoryError> {
        let trimmed = text.as_ref().trim();
        if trimmed.is_empty() {
            return Err(MemoryError::EmptyRuleText);
        }
        Ok(Rule(trimmed.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for Rule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Rule::new(s).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A short-term case together with its current zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedCase {
    pub index: usize,
    pub record: CaseRecord,
}

/// Read-only copy of the memory contents as returned by `list`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryView {
    pub cases: Vec<IndexedCase>,
    pub rules: Vec<Rule>,
}

impl MemoryView {
    pub fn is_empty(&self) -> bool {
        self.cases.is_empty() && self.rules.is_empty()
    }
}

/// A memory operation as issued by a policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
pub enum MemoryOp {
    List,
    Append { case_record: CaseRecord },
    Pop { indices: Vec<usize> },
    Consolidate { rules: Vec<Rule> },
}

impl MemoryOp {
    pub fn kind(&self) -> OpKind {
        match self {
            MemoryOp::List => OpKind::List,
            MemoryOp::Append { .. } => OpKind::Append,
            MemoryOp::Pop { .. } => OpKind::Pop,
            MemoryOp::Consolidate { .. } => OpKind::Consolidate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    List,
    Append,
    Pop,
    Consolidate,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::List => "list",
            OpKind::Append => "append",
            OpKind::Pop => "pop",
            OpKind::Consolidate => "consolidate",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Failure of [`AgentState::apply_op`], tagged with the operation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{op} failed: {source}")]
pub struct OpError {
    pub op: OpKind,
    #[source]
    pub source: MemoryError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "result")]
pub enum OpResult {
    Listed { view: MemoryView },
    Appended { index: usize },
    Popped { evicted: Vec<CaseRecord> },
    Consolidated { added: usize },
}

/// The agent state: short-term case cluster and long-term rule cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentState {
    capacity: usize,
    short_term: Vec<CaseRecord>,
    long_term: Vec<Rule>,
}

impl Default for AgentState {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY).expect("default capacity is positive")
    }
}

impl AgentState {
    pub fn new(capacity: usize) -> Result<Self, MemoryError> {
        if capacity == 0 {
            return Err(MemoryError::InvalidCapacity);
        }
        Ok(Self {
            capacity,
            short_term: Vec::with_capacity(capacity),
            long_term: Vec::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn short_term(&self) -> &[CaseRecord] {
        &self.short_term
    }

    pub fn long_term(&self) -> &[Rule] {
        &self.long_term
    }

    pub fn occupancy(&self) -> usize {
        self.short_term.len()
    }

    pub fn is_full(&self) -> bool {
        self.short_term.len() >= self.capacity
    }

    pub fn list_memory(&self) -> MemoryView {
        MemoryView {
            cases: self
                .short_term
                .iter()
                .enumerate()
                .map(|(index, record)| IndexedCase {
                    index,
                    record: record.clone(),
                })
                .collect(),
            rules: self.long_term.clone(),
        }
    }

    /// Appends `record` at the tail. Returns the index it landed at.
    pub fn append_case(&mut self, record: CaseRecord) -> Result<usize, MemoryError> {
        record.validate()?;
        if self.is_full() {
            return Err(MemoryError::CapacityExceeded {
                capacity: self.capacity,
            });
        }
        self.short_term.push(record);
        Ok(self.short_term.len() - 1)
    }

    /// Evicts the cases at `indices`. Evicted records come back in ascending
    /// index order; survivors keep their relative order.
    pub fn pop_cases(&mut self, indices: &[usize]) -> Result<Vec<CaseRecord>, MemoryError> {
        let len = self.short_term.len();
        let mut selected = BTreeSet::new();
        for &index in indices {
            if index >= len {
                return Err(MemoryError::IndexOutOfRange { index, len });
            }
            if !selected.insert(index) {
                return Err(MemoryError::DuplicateIndex { index });
            }
        }

        let mut evicted = Vec::with_capacity(selected.len());
        let mut survivors = Vec::with_capacity(len - selected.len());
        for (i, record) in std::mem::take(&mut self.short_term).into_iter().enumerate() {
            if selected.contains(&i) {
                evicted.push(record);
            } else {
                survivors.push(record);
            }
        }
        self.short_term = survivors;
        Ok(evicted)
    }

    /// Appends each rule not already present. Returns how many were inserted.
    pub fn consolidate_rules(&mut self, rules: &[Rule]) -> Result<usize, MemoryError> {
        if rules.is_empty() {
            return Err(MemoryError::EmptyRuleList);
        }
        let mut added = 0;
        for rule in rules {
            if !self.long_term.contains(rule) {
                self.long_term.push(rule.clone());
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn apply_op(&mut self, op: &MemoryOp) -> Result<OpResult, OpError> {
        let wrap = |source| OpError {
            op: op.kind(),
            source,
        };
        match op {
            MemoryOp::List => Ok(OpResult::Listed {
                view: self.list_memory(),
            }),
            MemoryOp::Append { case_record } => self
                .append_case(case_record.clone())
                .map(|index| OpResult::Appended { index })
                .map_err(wrap),
            MemoryOp::Pop { indices } => self
                .pop_cases(indices)
                .map(|evicted| OpResult::Popped { evicted })
                .map_err(wrap),
            MemoryOp::Consolidate { rules } => self
                .consolidate_rules(rules)
                .map(|added| OpResult::Consolidated { added })
                .map_err(wrap),
        }
    }

    /// Applies a logged op sequence in order, stopping at the first failure.
    pub fn replay<'a>(
        &mut self,
        ops: impl IntoIterator<Item = &'a MemoryOp>,
    ) -> Result<(), OpError> {
        for op in ops {
            self.apply_op(op)?;
        }
        Ok(())
    }

    /// Serializes the state as a single JSON object.
    pub fn snapshot(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("agent state is always serializable")
    }

    pub fn restore(bytes: &[u8]) -> Result<Self, MemoryError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            capacity: usize,
            short_term: Vec<CaseRecord>,
            long_term: Vec<Rule>,
        }
        let malformed = |msg: String| MemoryError::MalformedSnapshot(msg);

        let raw: Raw = serde_json::from_slice(bytes).map_err(|e| malformed(e.to_string()))?;
        if raw.capacity == 0 {
            return Err(malformed("capacity must be positive".into()));
        }
        if raw.short_term.len() > raw.capacity {
            return Err(malformed(format!(
                "{} short-term cases exceed capacity {}",
                raw.short_term.len(),
                raw.capacity
            )));
        }
        for record in &raw.short_term {
            record.validate().map_err(|e| malformed(e.to_string()))?;
        }
        let distinct: BTreeSet<&Rule> = raw.long_term.iter().collect();
        if distinct.len() != raw.long_term.len() {
            return Err(malformed("duplicate long-term rule".into()));
        }
        Ok(Self {
            capacity: raw.capacity,
            short_term: raw.short_term,
            long_term: raw.long_term,
        })
    }
}
