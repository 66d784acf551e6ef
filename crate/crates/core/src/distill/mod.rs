//! Teacher-student distillation of a (mixed) controller into one network,
//! optionally hardened with fast-gradient-sign inputs and L2 weight decay.

mod dataset;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{fgsm_direction, rollout, Controller, DynamicsError, PerturbationModel, SystemSpec};
use crate::nn::{
    lipschitz_upper_bound, optimizer_step, Activation, AdamConfig, GradientBundle, Network, NnError,
    NormKind, OptimizerState, Tape,
};

pub use dataset::{DistillDataset, Sample};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("distillation dataset is empty")]
    EmptyDataset,
    #[error("invalid distillation configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("dataset line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DistillError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectMode {
    /// (observed state, applied control) pairs along teacher rollouts.
    Rollout,
    /// Teacher evaluated at the cell centres of a regular grid over `X`.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    /// Probability that a minibatch is trained on adversarial inputs.
    pub p: f64,
    /// Absolute per-dimension perturbation bound; when absent,
    /// `delta_fraction` of the state range is used.
    pub delta: Option<Vec<f64>>,
    pub delta_fraction: f64,
    /// L2 weight on the sum of squared parameters.
    pub lambda: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs before this one train on clean inputs only.
    pub adversarial_start_epoch: usize,
    pub norm: NormKind,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            delta: None,
            delta_fraction: 0.1,
            lambda: 1e-3,
            hidden: vec![32, 32],
            activation: Activation::Tanh,
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            adversarial_start_epoch: 0,
            norm: NormKind::Operator2,
            seed: 0,
        }
    }
}

impl DistillConfig {
    /// Plain regression: no adversarial inputs, no weight decay.
    pub fn direct(&self) -> Self {
        Self {
            p: 0.0,
            lambda: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(DistillError::Config(format!("p = {} outside [0, 1]", self.p)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DistillError::Config("lambda must be nonnegative".into()));
        }
        if !(self.delta_fraction >= 0.0) {
            return Err(DistillError::Config("delta fraction must be nonnegative".into()));
        }
        if let Some(d) = &self.delta {
            if d.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(DistillError::Config("delta must be nonnegative".into()));
            }
        }
        if self.batch_size == 0 || !(self.lr > 0.0) || self.hidden.contains(&0) {
            return Err(DistillError::Config("batch size, learning rate and widths must be positive".into()));
        }
        Ok(())
    }

    /// The perturbation bound in state units.
    pub fn resolve_delta(&self, state_scale: &[f64]) -> Vec<f64> {
        match &self.delta {
            Some(d) => d.clone(),
            None => state_scale.iter().map(|r| r * self.delta_fraction).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    /// Clean mean squared error over the whole dataset.
    pub final_mse: f64,
    pub lipschitz: f64,
    pub epoch_losses: Vec<f64>,
    pub adversarial_batches: usize,
    pub total_batches: usize,
}

/// Collects `n_states` teacher-labelled pairs. Labels are the clipped
/// controls the plant would receive.
pub fn collect_teacher_data<R: Rng + ?Sized>(
    teacher: &dyn Controller,
    spec: &SystemSpec,
    n_states: usize,
    mode: CollectMode,
    rng: &mut R,
) -> Result<DistillDataset> {
    let mut data = DistillDataset::new(spec.state_dim, spec.input_dim);
    match mode {
        CollectMode::Rollout => {
            let mut episode = 0usize;
            while data.len() < n_states {
                let s0 = spec.initial_set.sample_uniform(rng);
                let traj = rollout(spec, teacher, &s0, &PerturbationModel::None, None, rng)?;
                for (s, u) in traj.observed_states.iter().zip(&traj.controls) {
                    if data.len() == n_states {
                        break;
                    }
                    data.push(Sample {
                        state: s.clone(),
                        control: u.clone(),
                        provenance: format!("rollout:{episode}"),
                    });
                }
                episode += 1;
                if episode > 100 * n_states.max(1) {
                    return Err(DistillError::Config("teacher rollouts yield no data".into()));
                }
            }
        }
        CollectMode::Grid => {
            let domain = spec.bounded_safe_region();
            let d = spec.state_dim;
            let k = (n_states as f64).powf(1.0 / d as f64).floor() as usize;
            // guard against round-off in the root
            let k = if (k + 1).checked_pow(d as u32).is_some_and(|c| c <= n_states) { k + 1 } else { k };
            if k > 0 {
                for cell in domain.subdivide(k) {
                    let s = cell.center();
                    let raw = teacher.control(&s);
                    if raw.len() != spec.input_dim || raw.iter().any(|v| !v.is_finite()) {
                        return Err(DistillError::Config("teacher produced an invalid control".into()));
                    }
                    data.push(Sample {
                        control: crate::dynamics::clip_control(&raw, &spec.input_bound),
                        state: s,
                        provenance: "grid".into(),
                    });
                }
            }
        }
    }
    Ok(data)
}

/// `delta * sign(d l / d s)` for `l = mean squared error` between the
/// student's output at `s` and `target`.
pub fn fgsm_perturb(student: &Network, s: &[f64], target: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::default();
    let y = student.forward_recorded(s, &mut tape)?;
    let m = y.len() as f64;
    let upstream: Vec<f64> = y.iter().zip(target).map(|(a, b)| 2.0 * (a - b) / m).collect();
    let grad = student.backward(&tape, &upstream)?.input;
    Ok(fgsm_direction(&grad, delta))
}

/// Mean squared error of `student` over `samples`.
pub fn mse(student: &Network, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(DistillError::EmptyDataset);
    }
    let mut total = 0.0;
    for s in samples {
        let y = student.forward(&s.state)?;
        total += y
            .iter()
            .zip(&s.control)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / y.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// One optimizer step on a minibatch. With probability `p` (a single draw
/// per batch) every input is replaced by its FGSM perturbation. Returns
/// the regularized batch loss and whether the batch was adversarial.
pub fn robust_distill_step<R: Rng + ?Sized>(
    student: &mut Network,
    opt: &mut OptimizerState,
    batch: &[&Sample],
    p: f64,
    delta: &[f64],
    lambda: f64,
    rng: &mut R,
) -> Result<(f64, bool)> {
    if batch.is_empty() {
        return Err(DistillError::EmptyDataset);
    }
    let z: f64 = rng.random();
    let adversarial = z < p;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = GradientBundle::zeros_like(student);
    let mut tape = Tape::default();
    let mut loss = 0.0;
    for sample in batch {
        let input: Vec<f64> = if adversarial {
            let d = fgsm_perturb(student, &sample.state, &sample.control, delta)?;
            sample.state.iter().zip(d).map(|(s, d)| s + d).collect()
        } else {
            sample.state.clone()
        };
        let y = student.forward_recorded(&input, &mut tape)?;
        let m = y.len() as f64;
        loss += y
            .iter()
            .zip(&sample.control)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / m
            * scale;
        let upstream: Vec<f64> = y
            .iter()
            .zip(&sample.control)
            .map(|(a, b)| 2.0 * (a - b) / m * scale)
            .collect();
        student.backward_accumulate(&tape, &upstream, &mut grads)?;
    }
    grads.add_l2(student, lambda);
    loss += lambda * student.squared_norm();
    optimizer_step(student, &grads, opt)?;
    Ok((loss, adversarial))
}

/// Freshly initialized student for `dataset` under `cfg`.
pub fn init_student(state_dim: usize, input_dim: usize, cfg: &DistillConfig) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sizes = vec![state_dim];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(input_dim);
    Ok(Network::mlp(&sizes, cfg.activation, Activation::Identity, &mut rng)?)
}

/// Trains a student on `dataset`. `state_scale` converts
/// `cfg.delta_fraction` into state units.
pub fn distill(dataset: &DistillDataset, cfg: &DistillConfig, state_scale: &[f64]) -> Result<(Network, DistillReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(DistillError::EmptyDataset);
    }
    if state_scale.len() != dataset.state_dim {
        return Err(DistillError::Config("state scale dimension mismatch".into()));
    }
    let delta = cfg.resolve_delta(state_scale);
    if delta.len() != dataset.state_dim {
        return Err(DistillError::Config("delta dimension mismatch".into()));
    }
    let mut student = init_student(dataset.state_dim, dataset.input_dim, cfg)?;
    let mut opt = OptimizerState::new(&student, AdamConfig::with_lr(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut report = DistillReport {
        final_mse: 0.0,
        lipschitz: 0.0,
        epoch_losses: Vec::with_capacity(cfg.epochs),
        adversarial_batches: 0,
        total_batches: 0,
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let p = if epoch >= cfg.adversarial_start_epoch { cfg.p } else { 0.0 };
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|i| &dataset.samples[*i]).collect();
            let (loss, adv) = robust_distill_step(&mut student, &mut opt, &batch, p, &delta, cfg.lambda, &mut rng)?;
            if !loss.is_finite() {
                return Err(DistillError::NonFinite { epoch });
            }
            epoch_loss += loss;
            batches += 1;
            report.adversarial_batches += usize::from(adv);
        }
        report.total_batches += batches;
        report.epoch_losses.push(epoch_loss / batches as f64);
    }
    report.final_mse = mse(&student, &dataset.samples)?;
    report.lipschitz = lipschitz_upper_bound(&student, cfg.norm);
    Ok((student, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin_system;
    use crate::nn::Layer;

    fn linear(w: f64) -> Network {
        Network::new(vec![Layer::new(1, 1, vec![w], vec![0.0], Activation::Identity).unwrap()]).unwrap()
    }

    fn sample(s: Vec<f64>, u: Vec<f64>) -> Sample {
        Sample {
            state: s,
            control: u,
            provenance: "test".into(),
        }
    }

    #[test]
    fn fgsm_examples() {
        let net = linear(2.0);
        // exact fit: zero gradient
        assert_eq!(fgsm_perturb(&net, &[1.0], &[2.0], &[0.1]).unwrap(), vec![0.0]);
        // zero bound
        assert_eq!(fgsm_perturb(&net, &[1.0], &[0.0], &[0.0]).unwrap(), vec![0.0]);
        // l = (2s)^2, dl/ds = 8 > 0
        let d = fgsm_perturb(&net, &[1.0], &[0.0], &[0.1]).unwrap();
        assert_eq!(d, vec![0.1]);
        let l = |s: f64| (2.0 * s).powi(2);
        assert!(l(1.0 + d[0]) > l(1.0));
    }

    #[test]
    fn fgsm_never_decreases_loss_on_linear_students() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let net = linear(rng.random_range(-3.0..3.0));
            let (s, u, b) = (rng.random_range(-2.0..2.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..0.5));
            let d = fgsm_perturb(&net, &[s], &[u], &[b]).unwrap();
            assert!(d[0].abs() <= b);
            let l = |x: f64| (net.forward(&[x]).unwrap()[0] - u).powi(2);
            assert!(l(s + d[0]) >= l(s) - 1e-12);
        }
    }

    #[test]
    fn degenerate_adversarial_settings_equal_plain_regression() {
        let data: Vec<Sample> = (0..20).map(|i| sample(vec![i as f64 / 10.0 - 1.0], vec![0.5 * i as f64])).collect();
        let run = |p: f64, delta: f64| {
            let mut net = linear(0.3);
            let mut opt = OptimizerState::new(&net, AdamConfig::default());
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let batch: Vec<&Sample> = data.iter().collect();
            for _ in 0..10 {
                robust_distill_step(&mut net, &mut opt, &batch, p, &[delta], 0.0, &mut rng).unwrap();
            }
            net
        };
        let plain = run(0.0, 0.7);
        assert_eq!(run(1.0, 0.0), plain);
    }

    #[test]
    fn interpolates_small_dataset() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut data = DistillDataset::new(2, 1);
        for _ in 0..10 {
            let s: Vec<f64> = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let u = vec![(3.0 * s[0]).sin() + s[1] * s[1]];
            data.push(sample(s, u));
        }
        let cfg = DistillConfig {
            p: 0.0,
            lambda: 0.0,
            epochs: 3000,
            batch_size: 10,
            lr: 3e-3,
            ..DistillConfig::default()
        };
        let (_, rep) = distill(&data, &cfg, &[1.0, 1.0]).unwrap();
        assert!(rep.final_mse <= 1e-4, "mse {}", rep.final_mse);
    }

    #[test]
    fn zero_epochs_and_determinism() {
        let mut data = DistillDataset::new(1, 1);
        for i in 0..30 {
            let x = i as f64 / 15.0 - 1.0;
            data.push(sample(vec![x], vec![x.powi(3)]));
        }
        let zero = DistillConfig { epochs: 0, ..DistillConfig::default() };
        let (net, rep) = distill(&data, &zero, &[1.0]).unwrap();
        assert_eq!(net, init_student(1, 1, &zero).unwrap());
        assert!(rep.epoch_losses.is_empty());
        let cfg = DistillConfig { epochs: 20, ..DistillConfig::default() };
        let a = distill(&data, &cfg, &[1.0]).unwrap();
        let b = distill(&data, &cfg, &[1.0]).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert!(distill(&DistillDataset::new(1, 1), &cfg, &[1.0]).is_err());
    }

    #[test]
    fn collection_modes() {
        let spec = builtin_system("vanderpol").unwrap();
        let k = |s: &[f64]| vec![-30.0 * s[1] - 3.0 * s[0]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(collect_teacher_data(&k, &spec, 0, CollectMode::Rollout, &mut rng).unwrap().is_empty());
        let roll = collect_teacher_data(&k, &spec, 2000, CollectMode::Rollout, &mut rng).unwrap();
        assert_eq!(roll.len(), 2000);
        assert!(roll.samples.iter().all(|s| spec.input_bound.contains_point(&s.control)));
        let grid = collect_teacher_data(&k, &spec, 100, CollectMode::Grid, &mut rng).unwrap();
        assert_eq!(grid.len(), 100);
        for s in &grid.samples {
            assert!(spec.safe_region.contains_point(&s.state));
            assert_eq!(s.control, crate::dynamics::clip_control(&k(&s.state), &spec.input_bound));
        }
    }
}
