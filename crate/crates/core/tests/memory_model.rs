//! Memory state machine against a naive reference model.

use dxstream_core::memory::{AgentState, CaseRecord, MemoryOp, Rule};
use proptest::prelude::*;

/// Reference model: plain vectors, errors decided up front, no shared code
/// with the implementation.
#[derive(Debug, Clone, Default)]
struct Model {
    capacity: usize,
    cases: Vec<CaseRecord>,
    rules: Vec<String>,
}

impl Model {
    /// Returns whether the op should succeed, applying it if so.
    fn apply(&mut self, op: &MemoryOp) -> bool {
        match op {
            MemoryOp::List => true,
            MemoryOp::Append { case_record } => {
                let blank = [&case_record.case_summary, &case_record.diagnosis, &case_record.feedback]
                    .iter()
                    .any(|s| s.trim().is_empty());
                if blank || self.cases.len() >= self.capacity {
                    return false;
                }
                self.cases.push(case_record.clone());
                true
            }
            MemoryOp::Pop { indices } => {
                let mut sorted = indices.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != indices.len() || sorted.iter().any(|&i| i >= self.cases.len()) {
                    return false;
                }
                for &i in sorted.iter().rev() {
                    self.cases.remove(i);
                }
                true
            }
            MemoryOp::Consolidate { rules } => {
                if rules.is_empty() {
                    return false;
                }
                for r in rules {
                    if !self.rules.iter().any(|x| x == r.as_str()) {
                        self.rules.push(r.as_str().to_owned());
                    }
                }
                true
            }
        }
    }
}

fn arb_record() -> impl Strategy<Value = CaseRecord> {
    (0u32..50, prop_oneof![Just(""), Just("dx"), Just("other dx")], any::<bool>()).prop_map(|(n, dx, reason)| {
        let rec = CaseRecord::new(format!("case {n}"), dx, format!("Correct. Ground truth: L{n}."));
        if reason {
            rec.with_rationale(format!("because {n}"))
        } else {
            rec
        }
    })
}

fn arb_op() -> impl Strategy<Value = MemoryOp> {
    prop_oneof![
        1 => Just(MemoryOp::List),
        4 => arb_record().prop_map(|case_record| MemoryOp::Append { case_record }),
        3 => prop::collection::vec(0usize..12, 0..4).prop_map(|indices| MemoryOp::Pop { indices }),
        2 => prop::collection::vec(0u32..20, 0..3).prop_map(|ns| MemoryOp::Consolidate {
            rules: ns.into_iter().map(|n| Rule::new(format!("rule {n}")).unwrap()).collect(),
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_reference_model(cap in prop_oneof![Just(1usize), Just(3), Just(10)],
                               ops in prop::collection::vec(arb_op(), 0..60)) {
        let mut state = AgentState::new(cap).unwrap();
        let mut model = Model { capacity: cap, ..Model::default() };
        let mut applied = Vec::new();
        for op in &ops {
            let before = state.clone();
            let ok = model.apply(op);
            let res = state.apply_op(op);
            prop_assert_eq!(ok, res.is_ok(), "op {:?}", op);
            if res.is_err() {
                prop_assert_eq!(&state, &before, "failed op mutated state");
            } else {
                applied.push(op.clone());
            }
            prop_assert!(state.occupancy() <= cap);
            prop_assert!(state.long_term().len() >= before.long_term().len());
            prop_assert_eq!(&state.long_term()[..before.long_term().len()], before.long_term());
        }
        prop_assert_eq!(state.short_term(), &model.cases[..]);
        let rules: Vec<&str> = state.long_term().iter().map(Rule::as_str).collect();
        prop_assert_eq!(rules, model.rules.iter().map(String::as_str).collect::<Vec<_>>());

        let mut replayed = AgentState::new(cap).unwrap();
        replayed.replay(&applied).unwrap();
        prop_assert_eq!(replayed.snapshot(), state.snapshot());

        let bytes = state.snapshot();
        let restored = AgentState::restore(&bytes).unwrap();
        prop_assert_eq!(restored.snapshot(), bytes);
    }

    #[test]
    fn pop_preserves_survivor_order(n in 1usize..10, picks in prop::collection::btree_set(0usize..10, 0..10)) {
        let mut state = AgentState::new(10).unwrap();
        for i in 0..n {
            state.append_case(CaseRecord::new(format!("s{i}"), "d", "f")).unwrap();
        }
        let indices: Vec<usize> = picks.into_iter().filter(|&i| i < n).collect();
        let evicted = state.pop_cases(&indices).unwrap();
        let want_evicted: Vec<String> = indices.iter().map(|i| format!("s{i}")).collect();
        let got_evicted: Vec<&str> = evicted.iter().map(|r| r.case_summary.as_str()).collect();
        prop_assert_eq!(got_evicted, want_evicted.iter().map(String::as_str).collect::<Vec<_>>());
        let survivors: Vec<usize> = state
            .short_term()
            .iter()
            .map(|r| r.case_summary[1..].parse().unwrap())
            .collect();
        prop_assert!(survivors.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(survivors.len() + indices.len(), n);
    }
}

#[test]
fn snapshot_layout() {
    let mut state = AgentState::new(2).unwrap();
    state.append_case(CaseRecord::new("s", "d", "f")).unwrap();
    state.consolidate_rules(&[Rule::new("r").unwrap()]).unwrap();
    assert_eq!(
        String::from_utf8(state.snapshot()).unwrap(),
        r#"{"capacity":2,"short_term":[{"case_summary":"s","diagnosis":"d","feedback":"f","reasoning":null}],"long_term":["r"]}"#
    );
}

#[test]
fn restore_rejects_inconsistent_snapshots() {
    for bad in [
        r#"{"capacity":0,"short_term":[],"long_term":[]}"#,
        r#"{"capacity":1,"short_term":[{"case_summary":"a","diagnosis":"d","feedback":"f"},{"case_summary":"b","diagnosis":"d","feedback":"f"}],"long_term":[]}"#,
        r#"{"capacity":1,"short_term":[],"long_term":["x","x"]}"#,
        r#"{"capacity":1,"short_term":[],"long_term":[" "]}"#,
        r#"{"capacity":1,"short_term":[],"long_term":[],"extra":1}"#,
        r#"not json"#,
    ] {
        assert!(AgentState::restore(bad.as_bytes()).is_err(), "{bad}");
    }
}

#[test]
fn op_json_shapes() {
    let op: MemoryOp = serde_json::from_str(r#"{"action":"pop","indices":[0,2]}"#).unwrap();
    assert_eq!(op, MemoryOp::Pop { indices: vec![0, 2] });
    let text = serde_json::to_string(&MemoryOp::List).unwrap();
    assert_eq!(text, r#"{"action":"list"}"#);
}
