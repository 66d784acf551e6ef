use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{normalize, RolloutBuffer};
use super::policy::{gaussian_log_density, split_head, MixingPolicy, LOG_STD_MAX, LOG_STD_MIN};
use super::{MixingError, Result};
use crate::nn::{optimizer_step, AdamConfig, GradientBundle, Network, OptimizerState, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub update_epochs: usize,
    pub minibatch_size: usize,
    pub gae_lambda: f64,
    pub kl_target: f64,
    pub beta0: f64,
    /// Use the clipped-ratio surrogate with this clip distance instead of
    /// the KL penalty.
    pub clip: Option<f64>,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            update_epochs: 10,
            minibatch_size: 64,
            gae_lambda: 0.95,
            kl_target: 0.01,
            beta0: 1.0,
            clip: None,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
        }
    }
}

/// Policy plus optimizer state and the adaptive KL weight.
#[derive(Debug, Clone)]
pub struct PpoState {
    pub policy: MixingPolicy,
    pub beta: f64,
    actor_opt: OptimizerState,
    critic_opt: OptimizerState,
}

impl PpoState {
    pub fn new(policy: MixingPolicy, cfg: &PpoConfig) -> Self {
        Self {
            actor_opt: OptimizerState::new(&policy.actor, AdamConfig::with_lr(cfg.actor_lr)),
            critic_opt: OptimizerState::new(&policy.critic, AdamConfig::with_lr(cfg.critic_lr)),
            beta: cfg.beta0,
            policy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Mean `KL(pi_old || pi_new)` over the buffer after the update.
    pub mean_kl: f64,
    pub ratio_mean: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// KL weight after adaptation.
    pub beta: f64,
    pub value_loss: f64,
}

/// Per-dimension `KL(N(mo, so) || N(mn, sn))` summed, with its gradient
/// with respect to the new mean and log-std.
fn kl_and_grad(
    old_mean: &[f64],
    old_ls: &[f64],
    mean: &[f64],
    ls: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let mut kl = 0.0;
    let mut d_mean = Vec::with_capacity(mean.len());
    let mut d_ls = Vec::with_capacity(mean.len());
    for i in 0..mean.len() {
        let var_n = (2.0 * ls[i]).exp();
        let num = (2.0 * old_ls[i]).exp() + (old_mean[i] - mean[i]).powi(2);
        kl += ls[i] - old_ls[i] + num / (2.0 * var_n) - 0.5;
        d_mean.push((mean[i] - old_mean[i]) / var_n);
        d_ls.push(1.0 - num / var_n);
    }
    (kl, d_mean, d_ls)
}

/// Probability ratio and KL of `policy` against `old_actor` on every
/// buffered sample.
pub fn surrogate_terms(
    policy: &MixingPolicy,
    old_actor: &Network,
    buffer: &RolloutBuffer,
) -> Result<Vec<(f64, f64)>> {
    let n = policy.n_experts();
    buffer
        .steps
        .iter()
        .map(|t| {
            let (mean, ls) = split_head(&policy.actor.forward(&t.state)?, n);
            let (om, ols) = split_head(&old_actor.forward(&t.state)?, n);
            let ratio = (gaussian_log_density(&t.pre_action, &mean, &ls) - t.log_prob).exp();
            let (kl, _, _) = kl_and_grad(&om, &ols, &mean, &ls);
            Ok((ratio, kl))
        })
        .collect()
}

/// One PPO policy/value update over the buffer. `theta_old` is the actor
/// at entry; the buffer's log-probabilities must come from it.
pub fn ppo_update<R: Rng + ?Sized>(
    state: &mut PpoState,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if buffer.is_empty() {
        return Err(MixingError::EmptyBuffer);
    }
    if buffer.advantages.len() != buffer.len() || buffer.returns.len() != buffer.len() {
        return Err(MixingError::MissingAdvantages);
    }
    let n = state.policy.n_experts();
    let adv = normalize(&buffer.advantages);
    let old_actor = state.policy.actor.clone();
    let old_heads = buffer
        .steps
        .iter()
        .map(|t| Ok(split_head(&old_actor.forward(&t.state)?, n)))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut tape = Tape::default();
    let mut value_loss = 0.0;
    let mb = cfg.minibatch_size.max(1);
    for _ in 0..cfg.update_epochs {
        order.shuffle(rng);
        value_loss = 0.0;
        for chunk in order.chunks(mb) {
            let scale = 1.0 / chunk.len() as f64;
            let mut actor_grads = GradientBundle::zeros_like(&state.policy.actor);
            let mut critic_grads = GradientBundle::zeros_like(&state.policy.critic);
            for &i in chunk {
                let t = &buffer.steps[i];
                let out = state.policy.actor.forward_recorded(&t.state, &mut tape)?;
                let (mean, ls) = split_head(&out, n);
                let logp = gaussian_log_density(&t.pre_action, &mean, &ls);
                let ratio = (logp - t.log_prob).exp();
                if !ratio.is_finite() {
                    return Err(MixingError::NonFinite("probability ratio"));
                }
                let coeff = match cfg.clip {
                    Some(eps) => {
                        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
                        if clipped * adv[i] < ratio * adv[i] {
                            0.0
                        } else {
                            ratio * adv[i]
                        }
                    }
                    None => ratio * adv[i],
                };
                let beta = if cfg.clip.is_some() { 0.0 } else { state.beta };
                let (om, ols) = &old_heads[i];
                let (_, dkl_mean, dkl_ls) = kl_and_grad(om, ols, &mean, &ls);
                let mut upstream = vec![0.0; 2 * n];
                for j in 0..n {
                    let var = (2.0 * ls[j]).exp();
                    let z2 = (t.pre_action[j] - mean[j]).powi(2) / var;
                    let dlogp_mean = (t.pre_action[j] - mean[j]) / var;
                    let dlogp_ls = z2 - 1.0;
                    let d_mean = coeff * dlogp_mean - beta * dkl_mean[j];
                    let raw = out[n + j];
                    let active = (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw);
                    let d_ls = if active {
                        coeff * dlogp_ls - beta * dkl_ls[j]
                    } else {
                        0.0
                    };
                    // ascend J: descend -J
                    upstream[j] = -d_mean * scale;
                    upstream[n + j] = -d_ls * scale;
                }
                state
                    .policy
                    .actor
                    .backward_accumulate(&tape, &upstream, &mut actor_grads)?;

                let v = state.policy.critic.forward_recorded(&t.state, &mut tape)?[0];
                let err = v - buffer.returns[i];
                value_loss += err * err / buffer.len() as f64;
                state
                    .policy
                    .critic
                    .backward_accumulate(&tape, &[2.0 * err * scale], &mut critic_grads)?;
            }
            if !actor_grads.is_finite() || !critic_grads.is_finite() {
                return Err(MixingError::NonFinite("policy gradient"));
            }
            optimizer_step(&mut state.policy.actor, &actor_grads, &mut state.actor_opt)?;
            optimizer_step(&mut state.policy.critic, &critic_grads, &mut state.critic_opt)?;
        }
    }

    let terms = surrogate_terms(&state.policy, &old_actor, buffer)?;
    let count = terms.len() as f64;
    let mean_kl = terms.iter().map(|(_, kl)| kl).sum::<f64>() / count;
    if !mean_kl.is_finite() || !value_loss.is_finite() {
        return Err(MixingError::NonFinite("loss"));
    }
    if cfg.clip.is_none() {
        if mean_kl > 2.0 * cfg.kl_target {
            state.beta *= 2.0;
        } else if mean_kl < cfg.kl_target / 2.0 {
            state.beta /= 2.0;
        }
    }
    Ok(UpdateStats {
        mean_kl,
        ratio_mean: terms.iter().map(|(r, _)| r).sum::<f64>() / count,
        ratio_min: terms.iter().map(|(r, _)| *r).fold(f64::INFINITY, f64::min),
        ratio_max: terms.iter().map(|(r, _)| *r).fold(f64::NEG_INFINITY, f64::max),
        beta: state.beta,
        value_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::{compute_advantages, ActionMode, Transition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(rng: &mut ChaCha8Rng) -> MixingPolicy {
        MixingPolicy::new(2, vec!["a".into(), "b".into()], vec![3.0, 3.0], &[8], 0.0, -0.5, rng)
            .unwrap()
    }

    fn collect(p: &MixingPolicy, rng: &mut ChaCha8Rng, n: usize) -> RolloutBuffer {
        let mut b = RolloutBuffer::default();
        for i in 0..n {
            let s = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let a = p.act(&s, ActionMode::Sample, rng).unwrap();
            b.push(Transition {
                value: p.value(&s).unwrap(),
                state: s,
                pre_action: a.pre_action,
                action: a.weights,
                log_prob: a.gaussian_log_prob,
                reward: 0.0,
                done: true,
                episode_end: true,
                bootstrap_value: 0.0,
            });
            let _ = i;
        }
        b
    }

    #[test]
    fn identical_policies_have_unit_ratio_and_zero_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = policy(&mut rng);
        let b = collect(&p, &mut rng, 50);
        for (r, kl) in surrogate_terms(&p, &p.actor, &b).unwrap() {
            assert!((r - 1.0).abs() < 1e-12);
            assert!(kl.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_advantages_leave_actor_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = policy(&mut rng);
        let mut b = collect(&p, &mut rng, 40);
        b.advantages = vec![0.0; 40];
        b.returns = vec![0.0; 40];
        let mut st = PpoState::new(p.clone(), &PpoConfig::default());
        ppo_update(&mut st, &b, &PpoConfig::default(), &mut rng).unwrap();
        assert_eq!(st.policy.actor, p.actor);
    }

    #[test]
    fn positive_advantage_action_gains_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = policy(&mut rng);
        let s = vec![0.2, -0.4];
        // two fixed actions at the same state; the first is advantageous
        let good = p.act(&s, ActionMode::Sample, &mut rng).unwrap();
        let bad = p.act(&s, ActionMode::Sample, &mut rng).unwrap();
        let mut b = RolloutBuffer::default();
        for (a, r) in [(&good, 1.0), (&bad, -1.0)] {
            for _ in 0..8 {
                b.push(Transition {
                    state: s.clone(),
                    pre_action: a.pre_action.clone(),
                    action: a.weights.clone(),
                    log_prob: a.gaussian_log_prob,
                    reward: r,
                    value: 0.0,
                    done: true,
                    episode_end: true,
                    bootstrap_value: 0.0,
                });
            }
        }
        compute_advantages(&mut b, 0.99, 0.95).unwrap();
        let cfg = PpoConfig {
            update_epochs: 1,
            minibatch_size: 16,
            ..PpoConfig::default()
        };
        let mut st = PpoState::new(p.clone(), &cfg);
        ppo_update(&mut st, &b, &cfg, &mut rng).unwrap();
        let logp = |pol: &MixingPolicy, a: &crate::mixing::PolicyAction| {
            let (m, ls) = pol.head(&s).unwrap();
            gaussian_log_density(&a.pre_action, &m, &ls)
        };
        assert!(logp(&st.policy, &good) > logp(&p, &good));
        assert!(logp(&st.policy, &good) - logp(&st.policy, &bad) > logp(&p, &good) - logp(&p, &bad));
    }

    #[test]
    fn kl_gradient_matches_finite_difference() {
        let (om, ols) = (vec![0.3, -0.2], vec![-0.1, 0.4]);
        let (m, ls) = (vec![0.1, 0.5], vec![0.2, -0.3]);
        let (_, dm, dls) = kl_and_grad(&om, &ols, &m, &ls);
        let h = 1e-6;
        for j in 0..2 {
            let mut mp = m.clone();
            let mut mm = m.clone();
            mp[j] += h;
            mm[j] -= h;
            let fd = (kl_and_grad(&om, &ols, &mp, &ls).0 - kl_and_grad(&om, &ols, &mm, &ls).0) / (2.0 * h);
            assert!((fd - dm[j]).abs() < 1e-6);
            let mut lp = ls.clone();
            let mut lm = ls.clone();
            lp[j] += h;
            lm[j] -= h;
            let fd = (kl_and_grad(&om, &ols, &m, &lp).0 - kl_and_grad(&om, &ols, &m, &lm).0) / (2.0 * h);
            assert!((fd - dls[j]).abs() < 1e-6);
        }
        // KL of a distribution with itself
        assert!(kl_and_grad(&om, &ols, &om, &ols).0.abs() < 1e-15);
    }

    #[test]
    fn missing_advantages_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = policy(&mut rng);
        let b = collect(&p, &mut rng, 4);
        let mut st = PpoState::new(p, &PpoConfig::default());
        assert!(matches!(
            ppo_update(&mut st, &b, &PpoConfig::default(), &mut rng),
            Err(MixingError::MissingAdvantages)
        ));
    }
}
