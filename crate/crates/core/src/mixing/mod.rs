//! Adaptive mixing of expert controllers.
//!
//! A policy network maps the (observed) state to one bounded weight per
//! expert; the plant receives the clipped weighted sum of the experts'
//! controls. The policy is trained with a KL-penalized PPO objective on a
//! safety/energy reward.

mod buffer;
mod policy;
mod ppo;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{clip_control, DynamicsError, SystemSpec};
use crate::experts::ExpertError;
use crate::geometry::IntervalBox;
use crate::nn::NnError;

pub use buffer::{compute_advantages, normalize, RolloutBuffer, Transition};
pub use policy::{
    load_policy, save_policy, ActionMode, MixedController, MixingPolicy, PolicyAction,
    LOG_STD_MAX, LOG_STD_MIN,
};
pub use ppo::{ppo_update, surrogate_terms, PpoConfig, PpoState, UpdateStats};
pub use train::{train_mixing, EpochLog, MixingConfig, TrainingLog};

#[derive(Debug, Error)]
pub enum MixingError {
    #[error("rollout buffer is empty")]
    EmptyBuffer,
    #[error("advantages have not been computed for this buffer")]
    MissingAdvantages,
    #[error("non-finite {0} during policy training")]
    NonFinite(&'static str),
    #[error("invalid mixing configuration: {0}")]
    Config(String),
    #[error("epoch {epoch}, step {step}: {source}")]
    Expert {
        epoch: usize,
        step: usize,
        #[source]
        source: ExpertError,
    },
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("malformed policy manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MixingError> = std::result::Result<T, E>;

/// Safety/energy reward: `punishment` when the successor leaves `X`,
/// otherwise `h(||u||_1) = energy_offset - energy_slope * ||u||_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub punishment: f64,
    pub energy_offset: f64,
    pub energy_slope: f64,
    pub gamma: f64,
}

impl RewardSpec {
    /// `h` decays from 1 at zero control to 0.5 at the largest admissible
    /// `||u||_1`, so safe-step rewards sit in `[0.5, 1]`.
    pub fn for_system(spec: &SystemSpec) -> Self {
        let max_l1: f64 = spec
            .input_bound
            .lo()
            .iter()
            .zip(spec.input_bound.hi())
            .map(|(l, h)| l.abs().max(h.abs()))
            .sum();
        Self {
            punishment: -100.0,
            energy_offset: 1.0,
            energy_slope: 0.5 / max_l1.max(f64::MIN_POSITIVE),
            gamma: 0.99,
        }
    }

    pub fn energy_reward(&self, u: &[f64]) -> f64 {
        self.energy_offset - self.energy_slope * u.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn validate(&self, spec: &SystemSpec) -> Result<()> {
        if !(self.energy_offset > 0.0 && self.energy_slope > 0.0) {
            return Err(MixingError::Config("energy offset and slope must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(MixingError::Config(format!("discount {} outside (0, 1]", self.gamma)));
        }
        let worst: Vec<f64> = spec
            .input_bound
            .lo()
            .iter()
            .zip(spec.input_bound.hi())
            .map(|(l, h)| l.abs().max(h.abs()))
            .collect();
        if self.punishment >= self.energy_reward(&worst) {
            return Err(MixingError::Config(
                "punishment must be below every safe-step reward".into(),
            ));
        }
        Ok(())
    }
}

pub fn reward(s_next: &[f64], u: &[f64], spec: &SystemSpec, rs: &RewardSpec) -> f64 {
    if spec.is_safe(s_next) {
        rs.energy_reward(u)
    } else {
        rs.punishment
    }
}

/// `clip(sum_i a_i * kappa_i(s), U_inf, U_sup)`.
pub fn mix_control(weights: &[f64], expert_outputs: &[Vec<f64>], bound: &IntervalBox) -> Vec<f64> {
    let mut u = vec![0.0; bound.dim()];
    for (a, out) in weights.iter().zip(expert_outputs) {
        for (ui, oi) in u.iter_mut().zip(out) {
            *ui += a * oi;
        }
    }
    clip_control(&u, bound)
}
