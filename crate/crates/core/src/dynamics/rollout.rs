use rand::Rng;

use super::{observe, step, DynamicsError, PerturbationModel, Result, SystemSpec};
use crate::geometry::IntervalBox;
use crate::mixing::{reward, RewardSpec};
use crate::nn::Network;

/// Anything mapping an observed state to a (pre-clip) control.
///
/// Non-finite outputs are treated as a controller fault by [`rollout`].
pub trait Controller: Send + Sync {
    fn control(&self, observation: &[f64]) -> Vec<f64>;
}

impl<F> Controller for F
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn control(&self, observation: &[f64]) -> Vec<f64> {
        self(observation)
    }
}

impl Controller for Network {
    fn control(&self, observation: &[f64]) -> Vec<f64> {
        self.forward(observation)
            .unwrap_or_else(|_| vec![f64::NAN; self.output_dim()])
    }
}

pub fn clip_control(u: &[f64], bound: &IntervalBox) -> Vec<f64> {
    u.iter()
        .zip(bound.lo().iter().zip(bound.hi()))
        .map(|(v, (l, h))| v.clamp(*l, *h))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// True plant states, `states[0] = s0`.
    pub states: Vec<Vec<f64>>,
    /// What the controller saw at each step.
    pub observed_states: Vec<Vec<f64>>,
    /// Applied (clipped) controls.
    pub controls: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub safe: bool,
    /// Index into `states` of the first unsafe state, or of the step at
    /// which the controller faulted.
    pub first_violation_step: Option<usize>,
    pub controller_fault: bool,
}

impl Trajectory {
    /// Sum over steps of `||u||_1`.
    pub fn energy(&self) -> f64 {
        self.controls
            .iter()
            .map(|u| u.iter().map(|v| v.abs()).sum::<f64>())
            .sum()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Closed-loop simulation for `spec.horizon` steps or until the first
/// safety violation.
pub fn rollout<R: Rng + ?Sized>(
    spec: &SystemSpec,
    controller: &dyn Controller,
    s0: &[f64],
    perturbation: &PerturbationModel,
    reward_spec: Option<&RewardSpec>,
    rng: &mut R,
) -> Result<Trajectory> {
    if s0.len() != spec.state_dim {
        return Err(DynamicsError::Dimension("initial state".into()));
    }
    if !spec.is_safe(s0) {
        return Err(DynamicsError::Invalid(format!(
            "initial state {s0:?} is outside the safe region"
        )));
    }
    perturbation.validate(spec.state_dim)?;
    let mut traj = Trajectory {
        states: vec![s0.to_vec()],
        observed_states: Vec::with_capacity(spec.horizon),
        controls: Vec::with_capacity(spec.horizon),
        disturbances: Vec::with_capacity(spec.horizon),
        rewards: Vec::with_capacity(spec.horizon),
        safe: true,
        first_violation_step: None,
        controller_fault: false,
    };
    let mut s = s0.to_vec();
    for t in 0..spec.horizon {
        let obs = observe(&s, perturbation, rng)?;
        let raw = controller.control(&obs);
        traj.observed_states.push(obs);
        if raw.len() != spec.input_dim || raw.iter().any(|v| !v.is_finite()) {
            traj.safe = false;
            traj.controller_fault = true;
            traj.first_violation_step = Some(t);
            break;
        }
        let u = clip_control(&raw, &spec.input_bound);
        let w = spec.sample_disturbance(rng);
        let next = step(spec, &s, &u, &w)?;
        traj.rewards.push(match reward_spec {
            Some(rs) => reward(&next, &u, spec, rs),
            None => 0.0,
        });
        let safe = spec.is_safe(&next);
        traj.controls.push(u);
        traj.disturbances.push(w);
        traj.states.push(next.clone());
        if !safe {
            traj.safe = false;
            traj.first_violation_step = Some(t + 1);
            break;
        }
        s = next;
    }
    Ok(traj)
}
