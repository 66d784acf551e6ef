use std::f64::consts::{LN_2, PI};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{mix_control, MixingError, Result};
use crate::dynamics::Controller;
use crate::experts::Expert;
use crate::geometry::IntervalBox;
use crate::nn::{load_network, save_network, Activation, Network};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Sample,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAction {
    /// Expert weights `a`, inside `[-A_B, A_B]`.
    pub weights: Vec<f64>,
    pub pre_action: Vec<f64>,
    /// Log-density of the pre-squash Gaussian sample.
    pub gaussian_log_prob: f64,
    /// Log-density of `weights` (includes the tanh change of variables).
    pub log_prob: f64,
}

/// Squashed-Gaussian weight policy plus its value function.
///
/// The actor emits `2n` values: the pre-squash means followed by the log
/// standard deviations. Weights are `A_B * tanh(x)` with
/// `x ~ N(mean, exp(log_std)^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingPolicy {
    pub actor: Network,
    pub critic: Network,
    pub weight_bounds: Vec<f64>,
    pub labels: Vec<String>,
}

pub(crate) fn gaussian_log_density(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), ls)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// `sum_i log(A_B_i * (1 - tanh(x_i)^2))`, evaluated stably.
fn squash_log_jacobian(pre: &[f64], bounds: &[f64]) -> f64 {
    pre.iter()
        .zip(bounds)
        .map(|(x, b)| {
            let y = -2.0 * x;
            let softplus = if y > 30.0 { y } else { y.exp().ln_1p() };
            b.ln() + 2.0 * (LN_2 - x - softplus)
        })
        .sum()
}

impl MixingPolicy {
    /// Fresh policy with `tanh` hidden layers. The log-std outputs start at
    /// `init_log_std` and the mean outputs at `atanh(init_weight / A_B)`.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        labels: Vec<String>,
        weight_bounds: Vec<f64>,
        hidden: &[usize],
        init_weight: f64,
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(MixingError::Config("at least one expert is required".into()));
        }
        if weight_bounds.len() != n || weight_bounds.iter().any(|b| !(*b >= 1.0)) {
            return Err(MixingError::Config(
                "one weight bound >= 1 per expert is required".into(),
            ));
        }
        if init_weight.abs() >= weight_bounds.iter().cloned().fold(f64::INFINITY, f64::min) {
            return Err(MixingError::Config("initial weight must lie inside the bounds".into()));
        }
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        let mut actor_sizes = sizes.clone();
        actor_sizes.push(2 * n);
        let mut critic_sizes = sizes;
        critic_sizes.push(1);
        let mut actor = Network::mlp(&actor_sizes, Activation::Tanh, Activation::Identity, rng)?;
        let critic = Network::mlp(&critic_sizes, Activation::Tanh, Activation::Identity, rng)?;
        let last = actor.layers_mut().last_mut().expect("non-empty");
        // shrink the output layer so the initial policy is nearly state-independent
        for w in last.weights_mut() {
            *w *= 0.1;
        }
        for (i, b) in last.bias_mut().iter_mut().enumerate() {
            *b = if i < n {
                (init_weight / weight_bounds[i]).atanh()
            } else {
                init_log_std
            };
        }
        Ok(Self {
            actor,
            critic,
            weight_bounds,
            labels,
        })
    }

    pub fn n_experts(&self) -> usize {
        self.weight_bounds.len()
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_experts();
        if self.actor.output_dim() != 2 * n
            || self.critic.output_dim() != 1
            || self.critic.input_dim() != self.actor.input_dim()
            || self.labels.len() != n
        {
            return Err(MixingError::Config("actor/critic shapes disagree with expert count".into()));
        }
        if self.weight_bounds.iter().any(|b| !(*b >= 1.0)) {
            return Err(MixingError::Config("weight bounds must be >= 1".into()));
        }
        Ok(())
    }

    /// Pre-squash mean and clamped log-std at `s`.
    pub fn head(&self, s: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.actor.forward(s)?;
        Ok(split_head(&out, self.n_experts()))
    }

    pub fn squash(&self, pre: &[f64]) -> Vec<f64> {
        pre.iter()
            .zip(&self.weight_bounds)
            .map(|(x, b)| b * x.tanh())
            .collect()
    }

    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], mode: ActionMode, rng: &mut R) -> Result<PolicyAction> {
        let (mean, log_std) = self.head(s)?;
        let pre: Vec<f64> = match mode {
            ActionMode::Mean => mean.clone(),
            ActionMode::Sample => mean
                .iter()
                .zip(&log_std)
                .map(|(m, ls)| {
                    let xi: f64 = StandardNormal.sample(rng);
                    m + ls.exp() * xi
                })
                .collect(),
        };
        let gaussian = gaussian_log_density(&pre, &mean, &log_std);
        Ok(PolicyAction {
            weights: self.squash(&pre),
            log_prob: gaussian - squash_log_jacobian(&pre, &self.weight_bounds),
            gaussian_log_prob: gaussian,
            pre_action: pre,
        })
    }

    pub fn value(&self, s: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(s)?[0])
    }

    /// Whether `a` lies in the action box `prod_i [-A_B_i, A_B_i]`.
    pub fn action_box_contains(&self, a: &[f64]) -> bool {
        a.len() == self.n_experts()
            && a.iter().zip(&self.weight_bounds).all(|(v, b)| v.abs() <= *b)
    }

    pub fn action_box(&self) -> IntervalBox {
        IntervalBox::new(
            self.weight_bounds.iter().map(|b| -b).collect(),
            self.weight_bounds.clone(),
        )
        .expect("bounds are positive")
    }
}

pub(crate) fn split_head(out: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mean = out[..n].to_vec();
    let log_std = out[n..2 * n]
        .iter()
        .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
        .collect();
    (mean, log_std)
}

/// The mixed controller: deterministic (mean) weights applied to the
/// experts' outputs, clipped to the input bound.
#[derive(Debug, Clone)]
pub struct MixedController {
    pub policy: MixingPolicy,
    pub experts: Vec<Expert>,
    pub input_bound: IntervalBox,
}

impl MixedController {
    pub fn weights(&self, s: &[f64]) -> Result<Vec<f64>> {
        let (mean, _) = self.policy.head(s)?;
        Ok(self.policy.squash(&mean))
    }

    pub fn try_control(&self, s: &[f64]) -> Result<Vec<f64>> {
        let a = self.weights(s)?;
        let outs = self
            .experts
            .iter()
            .map(|e| e.evaluate(s))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|source| MixingError::Expert {
                epoch: 0,
                step: 0,
                source,
            })?;
        Ok(mix_control(&a, &outs, &self.input_bound))
    }
}

impl Controller for MixedController {
    fn control(&self, observation: &[f64]) -> Vec<f64> {
        self.try_control(observation)
            .unwrap_or_else(|_| vec![f64::NAN; self.input_bound.dim()])
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyManifest {
    n: usize,
    weight_bounds: Vec<f64>,
    labels: Vec<String>,
    actor: String,
    critic: String,
}

/// Writes `actor.json`, `critic.json` and `policy.json` into `dir`.
pub fn save_policy(policy: &MixingPolicy, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    save_network(&policy.actor, dir.join("actor.json"))?;
    save_network(&policy.critic, dir.join("critic.json"))?;
    let manifest = PolicyManifest {
        n: policy.n_experts(),
        weight_bounds: policy.weight_bounds.clone(),
        labels: policy.labels.clone(),
        actor: "actor.json".into(),
        critic: "critic.json".into(),
    };
    fs::write(dir.join("policy.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_policy(dir: impl AsRef<Path>) -> Result<MixingPolicy> {
    let dir = dir.as_ref();
    let manifest: PolicyManifest = serde_json::from_str(&fs::read_to_string(dir.join("policy.json"))?)?;
    let policy = MixingPolicy {
        actor: load_network(dir.join(&manifest.actor))?,
        critic: load_network(dir.join(&manifest.critic))?,
        weight_bounds: manifest.weight_bounds,
        labels: manifest.labels,
    };
    if policy.n_experts() != manifest.n {
        return Err(MixingError::Config("manifest expert count disagrees with bounds".into()));
    }
    policy.validate()?;
    Ok(policy)
}
