use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::{Controller, DynamicsError, Result};
use crate::nn::{Network, Tape};

/// Loss the attacker ascends with its single sign-gradient step.
#[derive(Clone)]
pub enum AttackObjective {
    /// Maximize `||net(s + d) - net(s)||^2`. Its gradient vanishes at
    /// `d = 0`, so it is taken at a probe point `s + probe * Delta * xi`
    /// with random signs `xi`.
    OutputDeviation { probe: f64 },
    /// Maximize `||net(s + d) - reference(s)||^2`.
    Tracking(Arc<dyn Controller>),
}

impl Default for AttackObjective {
    fn default() -> Self {
        AttackObjective::OutputDeviation { probe: 1e-3 }
    }
}

impl fmt::Debug for AttackObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackObjective::OutputDeviation { probe } => {
                f.debug_struct("OutputDeviation").field("probe", probe).finish()
            }
            AttackObjective::Tracking(_) => f.write_str("Tracking(..)"),
        }
    }
}

/// How the controller's observation of the state is corrupted.
#[derive(Debug, Clone, Default)]
pub enum PerturbationModel {
    #[default]
    None,
    /// `s + d`, `d_i ~ Uniform(-bound_i, bound_i)` each step.
    UniformNoise { bound: Vec<f64> },
    /// One fast-gradient-sign step against `target` each step.
    Fgsm {
        bound: Vec<f64>,
        target: Option<Arc<Network>>,
        objective: AttackObjective,
    },
}

impl PerturbationModel {
    pub fn fgsm(bound: Vec<f64>, target: Arc<Network>) -> Self {
        PerturbationModel::Fgsm {
            bound,
            target: Some(target),
            objective: AttackObjective::default(),
        }
    }

    pub fn bound(&self) -> Option<&[f64]> {
        match self {
            PerturbationModel::None => None,
            PerturbationModel::UniformNoise { bound } | PerturbationModel::Fgsm { bound, .. } => {
                Some(bound)
            }
        }
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        if let Some(b) = self.bound() {
            if b.len() != state_dim {
                return Err(DynamicsError::Dimension(format!(
                    "perturbation bound has {} components, state has {state_dim}",
                    b.len()
                )));
            }
            if b.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(DynamicsError::Config("perturbation bounds must be nonnegative".into()));
            }
        }
        if let PerturbationModel::Fgsm { target, .. } = self {
            match target {
                None => {
                    return Err(DynamicsError::Config(
                        "FGSM perturbation requires a target network".into(),
                    ))
                }
                Some(net) if net.input_dim() != state_dim => {
                    return Err(DynamicsError::Dimension("FGSM target input dimension".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `bound * sign(grad)` componentwise, with `sign(0) = 0`.
pub fn fgsm_direction(grad: &[f64], bound: &[f64]) -> Vec<f64> {
    grad.iter().zip(bound).map(|(g, b)| b * sign(*g)).collect()
}

fn attack_gradient<R: Rng + ?Sized>(
    net: &Network,
    s: &[f64],
    bound: &[f64],
    objective: &AttackObjective,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let nn_err = |_| DynamicsError::Domain("attack target evaluation");
    let mut tape = Tape::default();
    let (point, target) = match objective {
        AttackObjective::OutputDeviation { probe } => {
            let probe_point: Vec<f64> = s
                .iter()
                .zip(bound)
                .map(|(x, b)| {
                    let xi = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    x + probe * b * xi
                })
                .collect();
            (probe_point, net.forward(s).map_err(nn_err)?)
        }
        AttackObjective::Tracking(reference) => (s.to_vec(), reference.control(s)),
    };
    let out = net.forward_recorded(&point, &mut tape).map_err(nn_err)?;
    let upstream: Vec<f64> = out.iter().zip(&target).map(|(y, t)| 2.0 * (y - t)).collect();
    let grads = net.backward(&tape, &upstream).map_err(nn_err)?;
    Ok(grads.input)
}

/// The state as seen by the controller.
pub fn observe<R: Rng + ?Sized>(
    s: &[f64],
    model: &PerturbationModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    model.validate(s.len())?;
    match model {
        PerturbationModel::None => Ok(s.to_vec()),
        PerturbationModel::UniformNoise { bound } => Ok(s
            .iter()
            .zip(bound)
            .map(|(x, b)| if *b == 0.0 { *x } else { x + rng.random_range(-*b..=*b) })
            .collect()),
        PerturbationModel::Fgsm {
            bound,
            target,
            objective,
        } => {
            if bound.iter().all(|b| *b == 0.0) {
                return Ok(s.to_vec());
            }
            let net = target.as_ref().expect("validated");
            let grad = attack_gradient(net, s, bound, objective, rng)?;
            Ok(s.iter()
                .zip(fgsm_direction(&grad, bound))
                .map(|(x, d)| x + d)
                .collect())
        }
    }
}
