//! Round-wise group-relative advantages and the clipped surrogate objective.
//!
//! Every group of rollouts sampled for one round is centered on its own mean;
//! no statistics are shared across rounds or across groups. The objective is
//! evaluated as a value only: there are no gradients here.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Clip threshold used when none is configured.
pub const DEFAULT_CLIP_EPSILON: f64 = 0.28;
/// Rollouts sampled per round when none is configured.
pub const DEFAULT_GROUP_SIZE: usize = 8;

const STD_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdvantageError {
    #[error("group of {0} rollouts is too small; need at least 2")]
    GroupTooSmall(usize),
    #[error("reward at position {0} is not finite")]
    NonFiniteReward(usize),
    #[error("length mismatch: {ratios} ratios vs {advantages} advantages")]
    LengthMismatch { ratios: usize, advantages: usize },
    #[error("ratio at position {0} is not strictly positive")]
    NonPositiveRatio(usize),
    #[error("clip epsilon {0} outside (0, 1)")]
    InvalidEpsilon(f64),
    #[error("objective needs at least one element")]
    Empty,
    #[error("invalid KL penalty: {0}")]
    InvalidKl(&'static str),
}

/// Shaped rewards of the rollouts sampled for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub round_index: u64,
    pub rewards: Vec<f64>,
}

impl RolloutGroup {
    pub fn new(round_index: u64, rewards: Vec<f64>) -> Result<Self, AdvantageError> {
        let group = Self { round_index, rewards };
        group.validate()?;
        Ok(group)
    }

    pub fn validate(&self) -> Result<(), AdvantageError> {
        if self.rewards.len() < 2 {
            return Err(AdvantageError::GroupTooSmall(self.rewards.len()));
        }
        if let Some(i) = self.rewards.iter().position(|r| !r.is_finite()) {
            return Err(AdvantageError::NonFiniteReward(i));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvantageConfig {
    /// Divide centered rewards by the group standard deviation.
    pub normalize_std: bool,
}

/// Compensated sum (Neumaier's variant of Kahan summation).
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Each reward minus the group mean.
pub fn group_advantages(group: &RolloutGroup) -> Result<Vec<f64>, AdvantageError> {
    group_advantages_with(group, AdvantageConfig::default())
}

pub fn group_advantages_with(
    group: &RolloutGroup,
    cfg: AdvantageConfig,
) -> Result<Vec<f64>, AdvantageError> {
    group.validate()?;
    let n = group.rewards.len() as f64;
    let mean = compensated_sum(&group.rewards) / n;
    let mut adv: Vec<f64> = group.rewards.iter().map(|r| r - mean).collect();
    if cfg.normalize_std {
        let sq: Vec<f64> = adv.iter().map(|a| a * a).collect();
        let std = (compensated_sum(&sq) / n).sqrt();
        for a in &mut adv {
            *a /= std + STD_EPS;
        }
    }
    Ok(adv)
}

/// Centers every group independently. Groups sharing a round index are kept
/// apart, in input order.
pub fn advantages_by_round(
    groups: &[RolloutGroup],
    cfg: AdvantageConfig,
) -> Result<BTreeMap<u64, Vec<Vec<f64>>>, AdvantageError> {
    let centered: Vec<Vec<f64>> = groups
        .par_iter()
        .map(|g| group_advantages_with(g, cfg))
        .collect::<Result<_, _>>()?;
    let mut out: BTreeMap<u64, Vec<Vec<f64>>> = BTreeMap::new();
    for (group, adv) in groups.iter().zip(centered) {
        out.entry(group.round_index).or_default().push(adv);
    }
    Ok(out)
}

/// Additive KL penalty: `coefficient * mean(values)` is subtracted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlPenalty {
    pub coefficient: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveInputs {
    pub ratios: Vec<f64>,
    pub advantages: Vec<f64>,
    pub clip_epsilon: f64,
    pub kl: Option<KlPenalty>,
}

impl ObjectiveInputs {
    pub fn new(ratios: Vec<f64>, advantages: Vec<f64>) -> Self {
        Self {
            ratios,
            advantages,
            clip_epsilon: DEFAULT_CLIP_EPSILON,
            kl: None,
        }
    }

    pub fn validate(&self) -> Result<(), AdvantageError> {
        if self.ratios.len() != self.advantages.len() {
            return Err(AdvantageError::LengthMismatch {
                ratios: self.ratios.len(),
                advantages: self.advantages.len(),
            });
        }
        if self.ratios.is_empty() {
            return Err(AdvantageError::Empty);
        }
        if let Some(i) = self.ratios.iter().position(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(AdvantageError::NonPositiveRatio(i));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(AdvantageError::InvalidEpsilon(self.clip_epsilon));
        }
        if let Some(kl) = &self.kl {
            if !(kl.coefficient >= 0.0 && kl.coefficient.is_finite()) {
                return Err(AdvantageError::InvalidKl("coefficient must be finite and non-negative"));
            }
            if kl.values.len() != self.ratios.len() {
                return Err(AdvantageError::InvalidKl("one KL value per element"));
            }
            if kl.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(AdvantageError::InvalidKl("KL values must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// `min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)` for one element.
pub fn clipped_term(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Mean clipped surrogate minus the KL penalty. Higher is better.
pub fn clipped_objective(inputs: &ObjectiveInputs) -> Result<f64, AdvantageError> {
    inputs.validate()?;
    let n = inputs.ratios.len() as f64;
    let terms: Vec<f64> = inputs
        .ratios
        .iter()
        .zip(&inputs.advantages)
        .map(|(&r, &a)| clipped_term(r, a, inputs.clip_epsilon))
        .collect();
    let surrogate = compensated_sum(&terms) / n;
    let penalty = match &inputs.kl {
        Some(kl) => kl.coefficient * compensated_sum(&kl.values) / n,
        None => 0.0,
    };
    Ok(surrogate - penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn adv(rewards: &[f64]) -> Vec<f64> {
        group_advantages(&RolloutGroup::new(1, rewards.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn mean_centering() {
        assert_eq!(adv(&[1.0, 2.0, 3.0]), vec![-1.0, 0.0, 1.0]);
        assert_eq!(adv(&[4.5; 6]), vec![0.0; 6]);
    }

    #[test]
    fn singleton_group_rejected() {
        assert_eq!(
            RolloutGroup::new(1, vec![3.0]),
            Err(AdvantageError::GroupTooSmall(1))
        );
        let g = RolloutGroup {
            round_index: 1,
            rewards: vec![1.0],
        };
        assert_eq!(group_advantages(&g), Err(AdvantageError::GroupTooSmall(1)));
        assert!(RolloutGroup::new(1, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn rounds_are_centered_independently() {
        let groups = vec![
            RolloutGroup::new(1, vec![0.0, 2.0]).unwrap(),
            RolloutGroup::new(2, vec![10.0, 30.0]).unwrap(),
        ];
        let out = advantages_by_round(&groups, AdvantageConfig::default()).unwrap();
        assert_eq!(out[&1], vec![vec![-1.0, 1.0]]);
        assert_eq!(out[&2], vec![vec![-10.0, 10.0]]);

        let shifted = vec![
            groups[0].clone(),
            RolloutGroup::new(2, vec![110.0, 130.0]).unwrap(),
        ];
        let out2 = advantages_by_round(&shifted, AdvantageConfig::default()).unwrap();
        assert_eq!(out, out2);
    }

    #[test]
    fn same_round_groups_stay_separate() {
        let groups = vec![
            RolloutGroup::new(3, vec![0.0, 2.0]).unwrap(),
            RolloutGroup::new(3, vec![10.0, 30.0]).unwrap(),
        ];
        let out = advantages_by_round(&groups, AdvantageConfig::default()).unwrap();
        assert_eq!(out[&3], vec![vec![-1.0, 1.0], vec![-10.0, 10.0]]);
    }

    #[test]
    fn std_normalization_is_opt_in() {
        let g = RolloutGroup::new(1, vec![0.0, 2.0]).unwrap();
        let plain = group_advantages(&g).unwrap();
        let scaled = group_advantages_with(&g, AdvantageConfig { normalize_std: true }).unwrap();
        assert_eq!(plain, vec![-1.0, 1.0]);
        let expected = 1.0 / (1.0 + STD_EPS);
        assert!((scaled[1] - expected).abs() < 1e-12);
        assert!((scaled[0] + expected).abs() < 1e-12);
    }

    #[test]
    fn clipped_objective_hand_values() {
        let eps = 0.28;
        assert!((clipped_term(2.0, 1.0, eps) - 1.28).abs() < 1e-12);
        // negative advantage below the lower bound: the clipped branch is smaller
        assert!((clipped_term(0.5, -1.0, eps) + 0.72).abs() < 1e-12);
        assert!((clipped_term(2.0, -1.0, eps) + 2.0).abs() < 1e-12);
        assert!((clipped_term(0.5, 1.0, eps) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ratio_one_identity() {
        let mut inputs = ObjectiveInputs::new(vec![1.0; 4], vec![0.5, -1.5, 2.0, 3.0]);
        assert_eq!(clipped_objective(&inputs).unwrap(), 1.0);
        inputs.kl = Some(KlPenalty {
            coefficient: 0.5,
            values: vec![0.2, 0.4, 0.0, 0.2],
        });
        assert!((clipped_objective(&inputs).unwrap() - (1.0 - 0.5 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn objective_input_errors() {
        let bad = ObjectiveInputs::new(vec![1.0], vec![1.0, 2.0]);
        assert!(matches!(
            clipped_objective(&bad),
            Err(AdvantageError::LengthMismatch { .. })
        ));
        let bad = ObjectiveInputs::new(vec![1.0, 0.0], vec![1.0, 2.0]);
        assert_eq!(clipped_objective(&bad), Err(AdvantageError::NonPositiveRatio(1)));
        let mut bad = ObjectiveInputs::new(vec![1.0], vec![1.0]);
        bad.clip_epsilon = 1.0;
        assert_eq!(clipped_objective(&bad), Err(AdvantageError::InvalidEpsilon(1.0)));
        let mut bad = ObjectiveInputs::new(vec![1.0], vec![1.0]);
        bad.kl = Some(KlPenalty {
            coefficient: 1.0,
            values: vec![],
        });
        assert!(matches!(clipped_objective(&bad), Err(AdvantageError::InvalidKl(_))));
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(&v), 1.0);
    }

    fn rewards() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 2..64)
    }

    proptest! {
        #[test]
        fn zero_sum(r in rewards()) {
            let a = adv(&r);
            let scale = r.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
            prop_assert!(compensated_sum(&a).abs() <= 1e-9 * r.len() as f64 * scale);
        }

        #[test]
        fn shift_invariance(r in rewards(), c in -1e3f64..1e3) {
            let a = adv(&r);
            let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
            let b = adv(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + c.abs()));
            }
        }

        #[test]
        fn scale_equivariance(r in rewards(), s in -10f64..10.0) {
            let a = adv(&r);
            let scaled: Vec<f64> = r.iter().map(|x| x * s).collect();
            let b = adv(&scaled);
            // rounding error scales with the largest input, not the output
            let bound = 1e-12 * (1.0 + r.iter().fold(0.0f64, |m, x| m.max(x.abs())) * s.abs());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x * s - y).abs() <= bound);
            }
        }

        #[test]
        fn argmax_preserved(r in rewards()) {
            let a = adv(&r);
            let argmax = |v: &[f64]| v.iter().enumerate()
                .fold(0, |best, (i, x)| if *x > v[best] { i } else { best });
            prop_assert_eq!(argmax(&r), argmax(&a));
        }

        #[test]
        fn inactive_clip_is_plain_surrogate(
            pairs in prop::collection::vec((0.02f64..1.98, -5f64..5.0), 1..32),
            beta in 0f64..2.0,
        ) {
            let (ratios, advantages): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let kl_values: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
            let inputs = ObjectiveInputs {
                ratios: ratios.clone(),
                advantages: advantages.clone(),
                clip_epsilon: 0.99,
                kl: Some(KlPenalty { coefficient: beta, values: kl_values.clone() }),
            };
            let n = ratios.len() as f64;
            let plain: Vec<f64> = ratios.iter().zip(&advantages).map(|(r, a)| r * a).collect();
            let expected = compensated_sum(&plain) / n - beta * compensated_sum(&kl_values) / n;
            prop_assert_eq!(clipped_objective(&inputs).unwrap(), expected);
        }

        #[test]
        fn objective_monotone_in_each_advantage(
            pairs in prop::collection::vec((0.05f64..3.0, -5f64..5.0), 1..16),
            which in any::<prop::sample::Index>(),
            bump in 0f64..3.0,
        ) {
            let (ratios, advantages): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let k = which.index(ratios.len());
            let base = clipped_objective(&ObjectiveInputs::new(ratios.clone(), advantages.clone())).unwrap();
            let mut raised = advantages.clone();
            raised[k] += bump;
            let after = clipped_objective(&ObjectiveInputs::new(ratios, raised)).unwrap();
            prop_assert!(after >= base - 1e-12);
        }
    }
}
