//! Safe control rate and control energy of closed loops, clean and under
//! observation attacks or noise, with paired sampling across controllers.
//!
//! Every evaluation with the same `(n, seed)` uses the same initial
//! states (stream 0 of the seed) and the same per-trajectory randomness
//! (stream `i + 1` for trajectory `i`), so controllers are compared on
//! identical disturbance sequences.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    rollout, sample_initial_states, AttackObjective, Controller, DynamicsError, PerturbationModel,
    SystemSpec, Trajectory,
};
use crate::nn::{lipschitz_upper_bound, Network, NormKind};
use crate::seeding::stream_rng;

pub type Result<T, E = DynamicsError> = std::result::Result<T, E>;

/// Outcome of `n` paired rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub n: usize,
    pub safe: Vec<bool>,
    /// Per-trajectory energy, `None` for unsafe trajectories.
    pub energies: Vec<Option<f64>>,
}

impl BatchStats {
    pub fn safe_rate(&self) -> f64 {
        self.safe.iter().filter(|s| **s).count() as f64 / self.n.max(1) as f64
    }

    /// Mean energy over safe trajectories; `None` if none was safe.
    pub fn energy(&self) -> Option<f64> {
        let safe: Vec<f64> = self.energies.iter().flatten().copied().collect();
        if safe.is_empty() {
            None
        } else {
            // sequential sum: order-independent of thread scheduling
            Some(safe.iter().sum::<f64>() / safe.len() as f64)
        }
    }
}

/// Paired initial states for `(n, seed)`.
pub fn paired_initial_states(spec: &SystemSpec, n: usize, seed: u64) -> Vec<Vec<f64>> {
    sample_initial_states(spec, n, &mut stream_rng(seed, 0))
}

/// Runs `n` paired rollouts in parallel.
pub fn run_batch(
    controller: &dyn Controller,
    spec: &SystemSpec,
    n: usize,
    pm: &PerturbationModel,
    seed: u64,
) -> Result<BatchStats> {
    let states = paired_initial_states(spec, n, seed);
    let trajs: Vec<Trajectory> = states
        .par_iter()
        .enumerate()
        .map(|(i, s0)| rollout(spec, controller, s0, pm, None, &mut stream_rng(seed, i as u64 + 1)))
        .collect::<Result<_>>()?;
    Ok(BatchStats {
        n,
        safe: trajs.iter().map(|t| t.safe).collect(),
        energies: trajs.iter().map(|t| t.safe.then(|| t.energy())).collect(),
    })
}

pub fn safe_control_rate(
    controller: &dyn Controller,
    spec: &SystemSpec,
    n: usize,
    pm: &PerturbationModel,
    seed: u64,
) -> Result<f64> {
    Ok(run_batch(controller, spec, n, pm, seed)?.safe_rate())
}

/// Average over safe trajectories of the summed 1-norm of applied
/// controls; `None` when no sampled trajectory is safe.
pub fn energy(controller: &dyn Controller, spec: &SystemSpec, n: usize, seed: u64) -> Result<Option<f64>> {
    Ok(run_batch(controller, spec, n, &PerturbationModel::None, seed)?.energy())
}

fn scaled_bound(spec: &SystemSpec, fraction: f64) -> Vec<f64> {
    spec.state_scale().iter().map(|r| r * fraction).collect()
}

/// Per-step FGSM perturbation of magnitude `fraction` of the state
/// range against `target`.
pub fn attack_model(spec: &SystemSpec, target: Arc<Network>, fraction: f64, objective: AttackObjective) -> PerturbationModel {
    PerturbationModel::Fgsm {
        bound: scaled_bound(spec, fraction),
        target: Some(target),
        objective,
    }
}

pub fn noise_model(spec: &SystemSpec, fraction: f64) -> PerturbationModel {
    PerturbationModel::UniformNoise {
        bound: scaled_bound(spec, fraction),
    }
}

/// Safe rate and energy of `student` under the output-deviation FGSM
/// attack.
pub fn attack_eval(student: Arc<Network>, spec: &SystemSpec, n: usize, attack_bound: f64, seed: u64) -> Result<BatchStats> {
    let pm = attack_model(spec, student.clone(), attack_bound, AttackObjective::default());
    run_batch(student.as_ref(), spec, n, &pm, seed)
}

pub fn noise_eval(controller: &dyn Controller, spec: &SystemSpec, n: usize, noise_bound: f64, seed: u64) -> Result<BatchStats> {
    run_batch(controller, spec, n, &noise_model(spec, noise_bound), seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n: usize,
    /// Fractions of the state range.
    pub attack_bound: f64,
    pub noise_bound: f64,
    pub norm: NormKind,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n: 500,
            attack_bound: 0.1,
            noise_bound: 0.1,
            norm: NormKind::Operator2,
            seed: 0,
        }
    }
}

/// A controller under comparison. Networks are attackable and carry a
/// Lipschitz bound; other controllers get neither.
#[derive(Clone)]
pub struct Entry {
    pub name: String,
    pub label: String,
    pub controller: Arc<dyn Controller>,
    pub network: Option<Arc<Network>>,
}

impl Entry {
    pub fn network(name: impl Into<String>, label: impl Into<String>, net: Arc<Network>) -> Self {
        Self {
            name: name.into(),
            label: label.into(),
            controller: net.clone(),
            network: Some(net),
        }
    }

    pub fn opaque(name: impl Into<String>, label: impl Into<String>, controller: Arc<dyn Controller>) -> Self {
        Self {
            name: name.into(),
            label: label.into(),
            controller,
            network: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub controller: String,
    pub label: String,
    pub s_r_clean: f64,
    pub s_r_attack: Option<f64>,
    pub s_r_noise: f64,
    pub energy: Option<f64>,
    pub lipschitz: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub attack_bound: f64,
    pub noise_bound: f64,
}

pub fn evaluate_entry(entry: &Entry, spec: &SystemSpec, cfg: &EvalConfig) -> Result<EvalReport> {
    let clean = run_batch(entry.controller.as_ref(), spec, cfg.n, &PerturbationModel::None, cfg.seed)?;
    let attack = match &entry.network {
        Some(net) => Some(attack_eval(net.clone(), spec, cfg.n, cfg.attack_bound, cfg.seed)?.safe_rate()),
        None => None,
    };
    let noise = noise_eval(entry.controller.as_ref(), spec, cfg.n, cfg.noise_bound, cfg.seed)?;
    Ok(EvalReport {
        controller: entry.name.clone(),
        label: entry.label.clone(),
        s_r_clean: clean.safe_rate(),
        s_r_attack: attack,
        s_r_noise: noise.safe_rate(),
        energy: clean.energy(),
        lipschitz: entry.network.as_ref().map(|n| lipschitz_upper_bound(n, cfg.norm)),
        n: cfg.n,
        seed: cfg.seed,
        attack_bound: cfg.attack_bound,
        noise_bound: cfg.noise_bound,
    })
}

/// One report per entry, all on the same paired samples.
pub fn compare(entries: &[Entry], spec: &SystemSpec, cfg: &EvalConfig) -> Result<Vec<EvalReport>> {
    entries.iter().map(|e| evaluate_entry(e, spec, cfg)).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub const REPORT_HEADER: &str =
    "controller,label,S_r_clean,S_r_attack,S_r_noise,energy,lipschitz,n,seed,attack_bound,noise_bound";

/// Comparison table; missing values are empty fields.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{:?},{},{:?},{},{},{},{},{:?},{:?}",
            r.controller,
            r.label,
            r.s_r_clean,
            opt(r.s_r_attack),
            r.s_r_noise,
            opt(r.energy),
            opt(r.lipschitz),
            r.n,
            r.seed,
            r.attack_bound,
            r.noise_bound
        );
    }
    out
}

/// `step,u0,..` for one clean rollout from `s0`.
pub fn control_trace(controller: &dyn Controller, spec: &SystemSpec, s0: &[f64], pm: &PerturbationModel, seed: u64) -> Result<String> {
    let t = rollout(spec, controller, s0, pm, None, &mut stream_rng(seed, 1))?;
    let mut out = String::from("step");
    for i in 0..spec.input_dim {
        let _ = write!(out, ",u{i}");
    }
    for i in 0..spec.state_dim {
        let _ = write!(out, ",s{i}");
    }
    out.push('\n');
    for (k, u) in t.controls.iter().enumerate() {
        let _ = write!(out, "{k}");
        for v in u.iter().chain(&t.states[k]) {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    Ok(out)
}
