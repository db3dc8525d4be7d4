//! Shared fixtures for the benchmarks.

use dxstream_core::env::synthetic::{generate, SyntheticConfig, SyntheticStream};
use dxstream_core::memory::{AgentState, CaseRecord, MemoryOp, Rule};

/// Seeded synthetic stream of `rounds` cases.
pub fn stream(rounds: usize) -> SyntheticStream {
    generate(&SyntheticConfig {
        rounds,
        ..SyntheticConfig::default()
    })
    .expect("default synthetic config is valid")
}

/// A memory at capacity with `rules` long-term entries.
pub fn full_memory(capacity: usize, rules: usize) -> AgentState {
    let mut state = AgentState::new(capacity).expect("positive capacity");
    for i in 0..capacity {
        state
            .append_case(CaseRecord::new(
                format!("case {i} with a few findings"),
                format!("dx {i}"),
                format!("Incorrect. Ground truth: dx {}.", i + 1),
            ))
            .expect("below capacity");
    }
    let rules: Vec<Rule> = (0..rules)
        .map(|i| Rule::new(format!("Consider dx {i} when findings include: a{i}, b{i}.")).expect("non-empty"))
        .collect();
    if !rules.is_empty() {
        state.consolidate_rules(&rules).expect("non-empty list");
    }
    state
}

/// The op pattern of one full-memory round: evict the oldest, store a rule,
/// append the new case.
pub fn eviction_round(i: usize) -> Vec<MemoryOp> {
    vec![
        MemoryOp::List,
        MemoryOp::Pop { indices: vec![0] },
        MemoryOp::Consolidate {
            rules: vec![Rule::new(format!("rule {}", i % 64)).expect("non-empty")],
        },
        MemoryOp::Append {
            case_record: CaseRecord::new(format!("case {i}"), "dx", "Correct. Ground truth: dx."),
        },
    ]
}

/// Deterministic pseudo-random rewards in [-8, 5], shaped-reward range.
pub fn rewards(n: usize, salt: u64) -> Vec<f64> {
    let mut x = salt.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            -8.0 + 13.0 * (x >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}
