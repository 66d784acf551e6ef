use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buffer::{compute_advantages, RolloutBuffer, Transition};
use super::policy::{ActionMode, MixingPolicy};
use super::ppo::{ppo_update, PpoConfig, PpoState};
use super::{mix_control, reward, MixingError, Result, RewardSpec};
use crate::dynamics::{observe, step, PerturbationModel, SystemSpec};
use crate::experts::Expert;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixingConfig {
    /// Number of PPO epochs `N`.
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub hidden: Vec<usize>,
    /// `A_B`, shared by every expert.
    pub weight_bound: f64,
    /// Initial mean weight of every expert.
    pub init_weight: f64,
    pub init_log_std: f64,
    pub ppo: PpoConfig,
    /// Per-dimension uniform observation noise during training, as a
    /// fraction of the state range; 0 trains on clean observations.
    pub training_noise: f64,
    pub seed: u64,
}

impl Default for MixingConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            episodes_per_epoch: 32,
            hidden: vec![32, 32],
            weight_bound: 3.0,
            init_weight: 0.5,
            init_log_std: -0.5,
            ppo: PpoConfig::default(),
            training_noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_return: f64,
    pub mean_kl: f64,
    pub safe_episode_fraction: f64,
    pub mean_energy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_return,mean_KL,safe_episode_fraction,mean_energy\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.mean_return, e.mean_kl, e.safe_episode_fraction, e.mean_energy
            );
        }
        out
    }
}

struct Episode {
    steps: Vec<Transition>,
    total_reward: f64,
    energy: f64,
    safe: bool,
}

fn run_episode(
    spec: &SystemSpec,
    policy: &MixingPolicy,
    experts: &[Expert],
    rs: &RewardSpec,
    pm: &PerturbationModel,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    let mut s = spec.initial_set.sample_uniform(rng);
    let mut ep = Episode {
        steps: Vec::with_capacity(spec.horizon),
        total_reward: 0.0,
        energy: 0.0,
        safe: true,
    };
    for t in 0..spec.horizon {
        let obs = observe(&s, pm, rng)?;
        let act = policy.act(&obs, ActionMode::Sample, rng)?;
        let outs = experts
            .iter()
            .map(|e| e.evaluate(&obs))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|source| MixingError::Expert { epoch, step: t, source })?;
        let u = mix_control(&act.weights, &outs, &spec.input_bound);
        let w = spec.sample_disturbance(rng);
        let next = step(spec, &s, &u, &w)?;
        let r = reward(&next, &u, spec, rs);
        let done = !spec.is_safe(&next);
        let end = done || t + 1 == spec.horizon;
        let bootstrap_value = if end && !done { policy.value(&next)? } else { 0.0 };
        ep.total_reward += r;
        ep.energy += u.iter().map(|v| v.abs()).sum::<f64>();
        ep.steps.push(Transition {
            value: policy.value(&obs)?,
            state: obs,
            pre_action: act.pre_action,
            action: act.weights,
            log_prob: act.gaussian_log_prob,
            reward: r,
            done,
            episode_end: end,
            bootstrap_value,
        });
        if done {
            ep.safe = false;
            break;
        }
        s = next;
    }
    Ok(ep)
}

/// PPO training of the mixing policy over `experts` (Algorithm: sample
/// episodes with the current policy, estimate advantages, update, repeat).
pub fn train_mixing(
    spec: &SystemSpec,
    experts: &[Expert],
    rs: &RewardSpec,
    pm: &PerturbationModel,
    cfg: &MixingConfig,
) -> Result<(MixingPolicy, TrainingLog)> {
    if experts.is_empty() {
        return Err(MixingError::Config("at least one expert is required".into()));
    }
    for e in experts {
        e.check_dims(spec.state_dim, spec.input_dim)
            .map_err(|source| MixingError::Expert { epoch: 0, step: 0, source })?;
    }
    rs.validate(spec)?;
    pm.validate(spec.state_dim)?;
    let train_pm = if cfg.training_noise > 0.0 {
        PerturbationModel::UniformNoise {
            bound: spec.state_scale().iter().map(|r| r * cfg.training_noise).collect(),
        }
    } else {
        pm.clone()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = experts.iter().map(|e| e.label.clone()).collect();
    let policy = MixingPolicy::new(
        spec.state_dim,
        labels,
        vec![cfg.weight_bound; experts.len()],
        &cfg.hidden,
        cfg.init_weight,
        cfg.init_log_std,
        &mut rng,
    )?;
    let mut state = PpoState::new(policy, &cfg.ppo);
    let mut log = TrainingLog::default();
    let mut buffer = RolloutBuffer::default();

    for epoch in 0..cfg.epochs {
        let episodes = (0..cfg.episodes_per_epoch)
            .into_par_iter()
            .map(|k| {
                let mut erng = ChaCha8Rng::seed_from_u64(cfg.seed);
                erng.set_stream((epoch * cfg.episodes_per_epoch + k) as u64 + 1);
                run_episode(spec, &state.policy, experts, rs, &train_pm, epoch, &mut erng)
            })
            .collect::<Result<Vec<_>>>()?;
        buffer.clear();
        let count = episodes.len().max(1) as f64;
        let mut entry = EpochLog {
            epoch,
            mean_return: 0.0,
            mean_kl: 0.0,
            safe_episode_fraction: 0.0,
            mean_energy: 0.0,
        };
        for ep in episodes {
            entry.mean_return += ep.total_reward / count;
            entry.mean_energy += ep.energy / count;
            entry.safe_episode_fraction += if ep.safe { 1.0 / count } else { 0.0 };
            for t in ep.steps {
                buffer.push(t);
            }
        }
        if !buffer.is_empty() {
            compute_advantages(&mut buffer, rs.gamma, cfg.ppo.gae_lambda)?;
            entry.mean_kl = ppo_update(&mut state, &buffer, &cfg.ppo, &mut rng)?.mean_kl;
        }
        log.epochs.push(entry);
    }
    Ok((state.policy, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin_system;

    fn gain(label: &str, k: [f64; 2]) -> Expert {
        Expert::linear(label, k.to_vec(), vec![0.0])
    }

    #[test]
    fn zero_epochs_returns_initial_policy() {
        let spec = builtin_system("vanderpol").unwrap();
        let rs = RewardSpec::for_system(&spec);
        let cfg = MixingConfig { epochs: 0, ..MixingConfig::default() };
        let (p, log) = train_mixing(&spec, &[gain("a", [0.0, -1.0])], &rs, &PerturbationModel::None, &cfg).unwrap();
        assert!(log.epochs.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let fresh = MixingPolicy::new(2, vec!["a".into()], vec![3.0], &cfg.hidden, cfg.init_weight, cfg.init_log_std, &mut rng)
            .unwrap();
        assert_eq!(p, fresh);
        assert_eq!(log.to_csv(), "epoch,mean_return,mean_KL,safe_episode_fraction,mean_energy\n");
    }

    #[test]
    fn training_is_deterministic() {
        let spec = builtin_system("vanderpol").unwrap();
        let rs = RewardSpec::for_system(&spec);
        let cfg = MixingConfig {
            epochs: 2,
            episodes_per_epoch: 4,
            hidden: vec![8],
            ..MixingConfig::default()
        };
        let experts = [gain("a", [0.0, -1.0]), gain("b", [-0.5, -0.5])];
        let a = train_mixing(&spec, &experts, &rs, &PerturbationModel::None, &cfg).unwrap();
        let b = train_mixing(&spec, &experts, &rs, &PerturbationModel::None, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.1.epochs.len(), 2);
    }

    #[test]
    fn no_experts_is_an_error() {
        let spec = builtin_system("vanderpol").unwrap();
        let rs = RewardSpec::for_system(&spec);
        assert!(train_mixing(&spec, &[], &rs, &PerturbationModel::None, &MixingConfig::default()).is_err());
    }
}
