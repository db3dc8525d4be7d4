//! Stream metrics: final accuracy, prefix-accuracy gain over a warm-up window,
//! and the cumulative accuracy trajectory.

use serde::Serialize;
use thiserror::Error;

use super::case::StreamRecord;

/// Default warm-up window for the prefix-accuracy gain.
pub const DEFAULT_WARMUP: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("stream has no rounds")]
    EmptyStream,
    #[error("need warmup <= n <= rounds, got warmup {warmup}, n {n}, rounds {rounds}")]
    InsufficientRounds { n: usize, warmup: usize, rounds: usize },
}

fn prefix_accuracy(correct: &[bool], n: usize) -> f64 {
    correct[..n].iter().filter(|c| **c).count() as f64 / n as f64
}

pub fn final_accuracy_of(correct: &[bool]) -> Result<f64, MetricsError> {
    if correct.is_empty() {
        return Err(MetricsError::EmptyStream);
    }
    Ok(prefix_accuracy(correct, correct.len()))
}

/// `Acc(1:n) - Acc(1:warmup)` over cumulative prefixes.
pub fn delta_acc_of(correct: &[bool], n: usize, warmup: usize) -> Result<f64, MetricsError> {
    if warmup == 0 || warmup > n || n > correct.len() {
        return Err(MetricsError::InsufficientRounds {
            n,
            warmup,
            rounds: correct.len(),
        });
    }
    if n == warmup {
        return Ok(0.0);
    }
    Ok(prefix_accuracy(correct, n) - prefix_accuracy(correct, warmup))
}

/// Cumulative accuracy after each round, as `(round, accuracy)` with rounds from 1.
pub fn cumulative_accuracy_of(correct: &[bool]) -> Vec<(usize, f64)> {
    let mut hits = 0usize;
    correct
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            hits += c as usize;
            (i + 1, hits as f64 / (i + 1) as f64)
        })
        .collect()
}

fn flags(records: &[StreamRecord]) -> Vec<bool> {
    records.iter().map(|r| r.correct).collect()
}

pub fn final_accuracy(records: &[StreamRecord]) -> Result<f64, MetricsError> {
    final_accuracy_of(&flags(records))
}

pub fn delta_acc_at(records: &[StreamRecord], n: usize, warmup: usize) -> Result<f64, MetricsError> {
    delta_acc_of(&flags(records), n, warmup)
}

pub fn cumulative_accuracy(records: &[StreamRecord]) -> Vec<(usize, f64)> {
    cumulative_accuracy_of(&flags(records))
}

/// Summary line appended to a stream report.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSummary {
    pub final_accuracy: f64,
    pub delta_acc: std::collections::BTreeMap<String, f64>,
    pub rounds: usize,
}

impl StreamSummary {
    /// Gains are reported for every requested `n` the stream is long enough for.
    pub fn compute(records: &[StreamRecord], ns: &[usize], warmup: usize) -> Result<Self, MetricsError> {
        let correct = flags(records);
        let final_accuracy = final_accuracy_of(&correct)?;
        let mut delta_acc = std::collections::BTreeMap::new();
        for &n in ns {
            if let Ok(d) = delta_acc_of(&correct, n, warmup) {
                delta_acc.insert(n.to_string(), d);
            }
        }
        Ok(Self {
            final_accuracy,
            delta_acc,
            rounds: records.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: bool = true;
    const F: bool = false;

    #[test]
    fn final_accuracy_basics() {
        assert_eq!(final_accuracy_of(&[T, F, T, T]).unwrap(), 0.75);
        assert_eq!(final_accuracy_of(&[T; 9]).unwrap(), 1.0);
        assert_eq!(final_accuracy_of(&[]), Err(MetricsError::EmptyStream));
    }

    #[test]
    fn delta_acc_definition() {
        // first 10 rounds at 0.5, rounds 11..50 at 0.75 => Acc(1:50) = 0.7
        let mut s = vec![];
        for i in 0..10 {
            s.push(i % 2 == 0);
        }
        for i in 0..40 {
            s.push(i % 4 != 0);
        }
        let d = delta_acc_of(&s, 50, 10).unwrap();
        assert!((d - 0.2).abs() < 1e-12);
        assert_eq!(delta_acc_of(&s, 10, 10).unwrap(), 0.0);
        assert!(matches!(
            delta_acc_of(&s, 5, 10),
            Err(MetricsError::InsufficientRounds { .. })
        ));
        assert!(delta_acc_of(&s, 51, 10).is_err());
    }

    #[test]
    fn cumulative_trajectory() {
        let traj = cumulative_accuracy_of(&[T, F, T, T]);
        assert_eq!(traj, vec![(1, 1.0), (2, 0.5), (3, 2.0 / 3.0), (4, 0.75)]);
    }

    #[test]
    fn summary_skips_unreachable_n() {
        let recs: Vec<StreamRecord> = (0..20)
            .map(|i| StreamRecord {
                round_index: i + 1,
                case_id: format!("c{i}"),
                prediction: "x".into(),
                correct: i % 3 == 0,
                occupancy_after: 0,
                rules_after: 0,
                turns_used: 1,
                reward: None,
            })
            .collect();
        let s = StreamSummary::compute(&recs, &[15, 50], 10).unwrap();
        assert_eq!(s.rounds, 20);
        assert!(s.delta_acc.contains_key("15"));
        assert!(!s.delta_acc.contains_key("50"));
    }
}
