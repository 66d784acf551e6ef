use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Expert, ExpertError, Result};
use crate::dynamics::{clip_control, rollout, step, PerturbationModel, SystemSpec};
use crate::mixing::{reward, RewardSpec};
use crate::nn::{
    optimizer_step, Activation, AdamConfig, GradientBundle, Layer, Network, OptimizerState, Tape,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpgConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Target-network smoothing factor.
    pub tau: f64,
    pub gamma: f64,
    /// Gaussian exploration noise as a fraction of the input half-range.
    pub noise_scale: f64,
    pub episodes: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![32, 32],
            critic_hidden: vec![64, 64],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            replay_capacity: 100_000,
            batch_size: 64,
            tau: 0.005,
            gamma: 0.99,
            noise_scale: 0.2,
            episodes: 300,
            warmup: 1_000,
            eval_samples: 100,
            seed: 0,
        }
    }
}

impl DdpgConfig {
    fn validate(&self) -> Result<()> {
        let positive = [self.actor_lr, self.critic_lr, self.gamma, self.noise_scale]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive
            || self.replay_capacity == 0
            || self.batch_size == 0
            || !(self.tau > 0.0 && self.tau < 1.0)
            || self.actor_hidden.contains(&0)
            || self.critic_hidden.contains(&0)
        {
            return Err(ExpertError::Training {
                episode: 0,
                message: "invalid DDPG configuration".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpgReport {
    pub episode_returns: Vec<f64>,
    /// Clean safe control rate of the final actor over `eval_samples`
    /// initial states.
    pub safe_rate: f64,
}

struct Replay {
    capacity: usize,
    next: usize,
    // (s, u_normalized, r, s', done)
    data: Vec<(Vec<f64>, Vec<f64>, f64, Vec<f64>, bool)>,
}

impl Replay {
    fn push(&mut self, item: (Vec<f64>, Vec<f64>, f64, Vec<f64>, bool)) {
        if self.data.len() < self.capacity {
            self.data.push(item);
        } else {
            self.data[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }
}

/// Actor whose last layer is `tanh`; the returned expert appends an
/// identity layer mapping `[-1, 1]` onto the input box.
fn scaled_actor(actor: &Network, spec: &SystemSpec) -> Result<Network> {
    let m = spec.input_dim;
    let mut w = vec![0.0; m * m];
    let (lo, hi) = (spec.input_bound.lo(), spec.input_bound.hi());
    let mut bias = vec![0.0; m];
    for i in 0..m {
        w[i * m + i] = 0.5 * (hi[i] - lo[i]);
        bias[i] = 0.5 * (hi[i] + lo[i]);
    }
    let mut layers = actor.layers().to_vec();
    layers.push(Layer::new(m, m, w, bias, Activation::Identity)?);
    Ok(Network::new(layers)?)
}

fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
    s.iter().chain(a).copied().collect()
}

fn diverged(episode: usize, what: &str) -> ExpertError {
    ExpertError::Training {
        episode,
        message: format!("non-finite {what}"),
    }
}

/// Minimal deep deterministic policy gradient with replay and target
/// networks. The actor works in normalized control units `[-1, 1]`.
pub fn ddpg_train(
    spec: &SystemSpec,
    cfg: &DdpgConfig,
    label: impl Into<String>,
) -> Result<(Expert, DdpgReport)> {
    cfg.validate()?;
    spec.validate()?;
    let (n, m) = (spec.state_dim, spec.input_dim);
    let rs = RewardSpec::for_system(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut sizes = vec![n];
    sizes.extend_from_slice(&cfg.actor_hidden);
    sizes.push(m);
    let mut actor = Network::mlp(&sizes, Activation::Relu, Activation::Tanh, &mut rng)?;
    let mut sizes = vec![n + m];
    sizes.extend_from_slice(&cfg.critic_hidden);
    sizes.push(1);
    let mut critic = Network::mlp(&sizes, Activation::Relu, Activation::Identity, &mut rng)?;
    let mut actor_target = actor.clone();
    let mut critic_target = critic.clone();
    let mut actor_opt = OptimizerState::new(&actor, AdamConfig::with_lr(cfg.actor_lr));
    let mut critic_opt = OptimizerState::new(&critic, AdamConfig::with_lr(cfg.critic_lr));

    let half: Vec<f64> = spec
        .input_bound
        .lo()
        .iter()
        .zip(spec.input_bound.hi())
        .map(|(l, h)| 0.5 * (h - l))
        .collect();
    let mid: Vec<f64> = spec
        .input_bound
        .lo()
        .iter()
        .zip(spec.input_bound.hi())
        .map(|(l, h)| 0.5 * (h + l))
        .collect();
    let noise = Normal::new(0.0, cfg.noise_scale).expect("positive scale");
    let mut replay = Replay {
        capacity: cfg.replay_capacity,
        next: 0,
        data: Vec::new(),
    };
    let mut returns = Vec::with_capacity(cfg.episodes);
    let mut tape = Tape::default();
    let mut total_steps = 0usize;

    for episode in 0..cfg.episodes {
        let mut s = spec.initial_set.sample_uniform(&mut rng);
        let mut ep_return = 0.0;
        for _ in 0..spec.horizon {
            let a: Vec<f64> = actor
                .forward(&s)?
                .iter()
                .map(|v| (v + noise.sample(&mut rng)).clamp(-1.0, 1.0))
                .collect();
            let u: Vec<f64> = a.iter().zip(&half).zip(&mid).map(|((a, h), c)| c + h * a).collect();
            let u = clip_control(&u, &spec.input_bound);
            let w = spec.sample_disturbance(&mut rng);
            let next = step(spec, &s, &u, &w)?;
            let r = reward(&next, &u, spec, &rs);
            let done = !spec.is_safe(&next);
            ep_return += r;
            // rewards rescaled so the critic sees O(1) targets
            replay.push((s.clone(), a, r / 100.0, next.clone(), done));
            total_steps += 1;

            if total_steps >= cfg.warmup && replay.data.len() >= cfg.batch_size {
                let idx = sample(&mut rng, replay.data.len(), cfg.batch_size);
                let scale = 1.0 / cfg.batch_size as f64;
                let mut cg = GradientBundle::zeros_like(&critic);
                let mut ag = GradientBundle::zeros_like(&actor);
                for i in idx.iter() {
                    let (bs, ba, br, bn, bd) = &replay.data[i];
                    let target = if *bd {
                        *br
                    } else {
                        let an = actor_target.forward(bn)?;
                        br + cfg.gamma * critic_target.forward(&concat(bn, &an))?[0]
                    };
                    let q = critic.forward_recorded(&concat(bs, ba), &mut tape)?[0];
                    critic.backward_accumulate(&tape, &[2.0 * (q - target) * scale], &mut cg)?;
                }
                if !cg.is_finite() {
                    return Err(diverged(episode, "critic loss"));
                }
                optimizer_step(&mut critic, &cg, &mut critic_opt)?;
                let mut actor_tape = Tape::default();
                for i in idx.iter() {
                    let bs = &replay.data[i].0;
                    let a = actor.forward_recorded(bs, &mut actor_tape)?;
                    critic.forward_recorded(&concat(bs, &a), &mut tape)?;
                    let dq = critic.backward(&tape, &[1.0])?.input;
                    // ascend Q: descend -Q through the action inputs
                    let upstream: Vec<f64> = dq[n..].iter().map(|g| -g * scale).collect();
                    actor.backward_accumulate(&actor_tape, &upstream, &mut ag)?;
                }
                if !ag.is_finite() {
                    return Err(diverged(episode, "actor gradient"));
                }
                optimizer_step(&mut actor, &ag, &mut actor_opt)?;
                actor_target.soft_update_from(&actor, cfg.tau)?;
                critic_target.soft_update_from(&critic, cfg.tau)?;
            }
            if done {
                break;
            }
            s = next;
        }
        if !ep_return.is_finite() {
            return Err(diverged(episode, "episode return"));
        }
        returns.push(ep_return);
    }

    let expert = Expert::neural(label, scaled_actor(&actor, spec)?);
    let samples = cfg.eval_samples.max(1);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    eval_rng.set_stream(1);
    let mut safe = 0usize;
    for _ in 0..samples {
        let s0 = spec.initial_set.sample_uniform(&mut eval_rng);
        if rollout(spec, &expert, &s0, &PerturbationModel::None, None, &mut eval_rng)?.safe {
            safe += 1;
        }
    }
    Ok((
        expert,
        DdpgReport {
            episode_returns: returns,
            safe_rate: safe as f64 / samples as f64,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin_system;
    use crate::experts::ExpertKind;

    #[test]
    fn zero_episodes_returns_initial_actor() {
        let spec = builtin_system("vanderpol").unwrap();
        let cfg = DdpgConfig {
            episodes: 0,
            eval_samples: 4,
            ..DdpgConfig::default()
        };
        let (e, rep) = ddpg_train(&spec, &cfg, "d").unwrap();
        assert!(rep.episode_returns.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = Network::mlp(&[2, 32, 32, 1], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let ExpertKind::Neural(net) = &e.kind else { panic!("neural expert expected") };
        assert_eq!(&net.layers()[..3], init.layers());
        // output scaled onto U = [-20, 20]
        assert_eq!(net.layers()[3].weights(), &[20.0]);
    }

    #[test]
    fn short_training_is_deterministic() {
        let spec = builtin_system("vanderpol").unwrap();
        let cfg = DdpgConfig {
            episodes: 3,
            warmup: 50,
            batch_size: 16,
            eval_samples: 4,
            ..DdpgConfig::default()
        };
        let a = ddpg_train(&spec, &cfg, "d").unwrap();
        let b = ddpg_train(&spec, &cfg, "d").unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert!(a.0.evaluate(&[1.0, -1.0]).unwrap()[0].abs() <= 20.0);
    }
}
