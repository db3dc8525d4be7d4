//! Per-round reward shaping.
//!
//! The shaped reward combines a binary diagnostic term with an occupancy
//! penalty on the short-term cluster. Under the round-linear schedule the
//! weight moves from the memory term to the diagnostic term as the stream
//! progresses, with normalized round index `t / T`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("occupancy {occupancy} outside 0..={capacity}")]
    InvalidOccupancy { occupancy: usize, capacity: usize },
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("round {round} outside 1..={horizon}")]
    InvalidRound { round: u64, horizon: u64 },
    #[error("invalid reward config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    #[default]
    RoundLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub diag_magnitude: f64,
    pub alpha: f64,
    pub lambda_diag_max: f64,
    pub lambda_mem_max: f64,
    pub schedule: Schedule,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            diag_magnitude: 5.0,
            alpha: 3.0,
            lambda_diag_max: 1.0,
            lambda_mem_max: 1.0,
            schedule: Schedule::RoundLinear,
        }
    }
}

impl RewardConfig {
    /// Constant weights `(1, 0)`: the total reduces to the diagnostic reward.
    pub fn diagnostic_only() -> Self {
        Self {
            lambda_mem_max: 0.0,
            schedule: Schedule::Constant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.diag_magnitude.is_finite() && self.diag_magnitude > 0.0) {
            return Err(RewardError::InvalidConfig("diag_magnitude must be finite and positive"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(RewardError::InvalidConfig("alpha must be finite and non-negative"));
        }
        for max in [self.lambda_diag_max, self.lambda_mem_max] {
            if !(max.is_finite() && max >= 0.0) {
                return Err(RewardError::InvalidConfig("lambda maxima must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_diag: f64,
    pub r_mem: f64,
    pub lambda_diag: f64,
    pub lambda_mem: f64,
    pub total: f64,
}

pub fn diagnostic_reward(correct: bool, cfg: &RewardConfig) -> f64 {
    if correct {
        cfg.diag_magnitude
    } else {
        -cfg.diag_magnitude
    }
}

/// `-alpha * occupancy / capacity`.
pub fn memory_reward(occupancy: usize, capacity: usize, cfg: &RewardConfig) -> Result<f64, RewardError> {
    if capacity == 0 {
        return Err(RewardError::ZeroCapacity);
    }
    if occupancy > capacity {
        return Err(RewardError::InvalidOccupancy { occupancy, capacity });
    }
    // 0 * -alpha would give -0.0
    if occupancy == 0 {
        return Ok(0.0);
    }
    Ok(-cfg.alpha * occupancy as f64 / capacity as f64)
}

/// Returns `(lambda_diag, lambda_mem)` for round `round` of `horizon`.
pub fn lambda_schedule(round: u64, horizon: u64, cfg: &RewardConfig) -> Result<(f64, f64), RewardError> {
    if round == 0 || round > horizon {
        return Err(RewardError::InvalidRound { round, horizon });
    }
    match cfg.schedule {
        Schedule::Constant => Ok((cfg.lambda_diag_max, cfg.lambda_mem_max)),
        Schedule::RoundLinear => {
            let progress = round as f64 / horizon as f64;
            Ok((
                cfg.lambda_diag_max * progress,
                cfg.lambda_mem_max * (1.0 - progress),
            ))
        }
    }
}

pub fn shaped_reward(
    correct: bool,
    occupancy: usize,
    capacity: usize,
    round: u64,
    horizon: u64,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let r_diag = diagnostic_reward(correct, cfg);
    let r_mem = memory_reward(occupancy, capacity, cfg)?;
    let (lambda_diag, lambda_mem) = lambda_schedule(round, horizon, cfg)?;
    Ok(RewardBreakdown {
        r_diag,
        r_mem,
        lambda_diag,
        lambda_mem,
        total: lambda_diag * r_diag + lambda_mem * r_mem,
    })
}
