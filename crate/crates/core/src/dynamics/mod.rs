//! Discrete-time plants with safety geometry, observation perturbations,
//! and closed-loop rollouts.

mod perturb;
mod plant;
mod rollout;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Interval, IntervalBox};

pub use perturb::{fgsm_direction, observe, AttackObjective, PerturbationModel};
pub use plant::{CartpoleParams, Monomial, Plant, PolynomialPlant, TimeModel};
pub use rollout::{clip_control, rollout, Controller, Trajectory};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite {0}")]
    Domain(&'static str),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid system spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("malformed system file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DynamicsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub plant: Plant,
    pub state_dim: usize,
    pub input_dim: usize,
    /// Safe region `X`; unconstrained coordinates carry infinite bounds.
    pub safe_region: IntervalBox,
    pub initial_set: IntervalBox,
    pub input_bound: IntervalBox,
    /// Additive disturbance box over the state (`Omega`).
    pub disturbance: IntervalBox,
    pub tau: f64,
    pub horizon: usize,
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("safe region", self.safe_region.dim(), self.state_dim),
            ("initial set", self.initial_set.dim(), self.state_dim),
            ("disturbance", self.disturbance.dim(), self.state_dim),
            ("input bound", self.input_bound.dim(), self.input_dim),
        ];
        for (what, got, want) in dims {
            if got != want {
                return Err(DynamicsError::Invalid(format!(
                    "{what} has dimension {got}, expected {want}"
                )));
            }
        }
        if !self.safe_region.contains_box(&self.initial_set) {
            return Err(DynamicsError::Invalid("initial set is not inside the safe region".into()));
        }
        if !self.initial_set.is_finite() || !self.input_bound.is_finite() || !self.disturbance.is_finite() {
            return Err(DynamicsError::Invalid("initial, input and disturbance sets must be bounded".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(DynamicsError::Invalid(format!("sampling period {} must be positive", self.tau)));
        }
        if self.horizon == 0 {
            return Err(DynamicsError::Invalid("horizon must be at least one step".into()));
        }
        if let Plant::Polynomial(p) = &self.plant {
            if p.components.len() != self.state_dim {
                return Err(DynamicsError::Invalid("one polynomial per state component required".into()));
            }
            let vars = self.state_dim + self.input_dim;
            if p.components.iter().flatten().any(|m| m.powers.len() != vars) {
                return Err(DynamicsError::Invalid(format!(
                    "every monomial needs {vars} exponents (state then control)"
                )));
            }
        }
        Ok(())
    }

    pub fn with_disturbance(mut self, disturbance: IntervalBox) -> Self {
        self.disturbance = disturbance;
        self
    }

    pub fn with_initial_set(mut self, initial_set: IntervalBox) -> Self {
        self.initial_set = initial_set;
        self
    }

    pub fn without_disturbance(self) -> Self {
        let d = self.state_dim;
        self.with_disturbance(IntervalBox::cube(d, 0.0, 0.0))
    }

    pub fn is_safe(&self, s: &[f64]) -> bool {
        self.safe_region.contains_point(s)
    }

    /// Per-dimension range (width) of the safe region, falling back to the
    /// initial set where `X` is unbounded. Perturbation budgets are
    /// fractions of this.
    pub fn state_scale(&self) -> Vec<f64> {
        self.bounded_safe_region().widths()
    }

    /// Bounded version of `X`, the domain controllers are approximated on.
    pub fn bounded_safe_region(&self) -> IntervalBox {
        self.safe_region.bounded_by(&self.initial_set)
    }

    pub fn sample_disturbance<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.disturbance.sample_uniform(rng)
    }
}

/// Exact one-step update `s(t+1) = f(s, u) + w`.
pub fn step(spec: &SystemSpec, s: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if s.len() != spec.state_dim || u.len() != spec.input_dim || w.len() != spec.state_dim {
        return Err(DynamicsError::Dimension(format!(
            "state {}/{}, control {}/{}, disturbance {}/{}",
            s.len(),
            spec.state_dim,
            u.len(),
            spec.input_dim,
            w.len(),
            spec.state_dim
        )));
    }
    if s.iter().chain(u).chain(w).any(|v| !v.is_finite()) {
        return Err(DynamicsError::Domain("step argument"));
    }
    Ok(spec.plant.step(spec.tau, s, u, w))
}

/// Interval extension of [`step`].
pub fn step_interval(
    spec: &SystemSpec,
    s: &[Interval],
    u: &[Interval],
    w: &[Interval],
) -> Vec<Interval> {
    spec.plant.step(spec.tau, s, u, w)
}

/// i.i.d. uniform draws from the initial box.
pub fn sample_initial_states<R: Rng + ?Sized>(
    spec: &SystemSpec,
    n: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..n).map(|_| spec.initial_set.sample_uniform(rng)).collect()
}

pub const BUILTIN_SYSTEMS: [&str; 3] = ["vanderpol", "system3d", "cartpole"];

pub fn builtin_system(name: &str) -> Result<SystemSpec> {
    let spec = match name {
        "vanderpol" => SystemSpec {
            name: name.into(),
            plant: Plant::VanDerPol,
            state_dim: 2,
            input_dim: 1,
            safe_region: IntervalBox::cube(2, -2.0, 2.0),
            initial_set: IntervalBox::cube(2, -2.0, 2.0),
            input_bound: IntervalBox::cube(1, -20.0, 20.0),
            disturbance: IntervalBox::new(vec![0.0, -0.05], vec![0.0, 0.05])?,
            tau: 0.05,
            horizon: 100,
        },
        "system3d" => SystemSpec {
            name: name.into(),
            plant: Plant::System3d,
            state_dim: 3,
            input_dim: 1,
            safe_region: IntervalBox::cube(3, -0.5, 0.5),
            initial_set: IntervalBox::cube(3, -0.5, 0.5),
            input_bound: IntervalBox::cube(1, -10.0, 10.0),
            disturbance: IntervalBox::cube(3, 0.0, 0.0),
            tau: 0.05,
            horizon: 100,
        },
        "cartpole" => SystemSpec {
            name: name.into(),
            plant: Plant::Cartpole(CartpoleParams::default()),
            state_dim: 4,
            input_dim: 1,
            safe_region: IntervalBox::new(
                vec![-2.4, f64::NEG_INFINITY, -0.209, f64::NEG_INFINITY],
                vec![2.4, f64::INFINITY, 0.209, f64::INFINITY],
            )?,
            initial_set: IntervalBox::cube(4, -0.2, 0.2),
            // the plant equations leave the force unbounded; this range is
            // ample for stabilization from X0
            input_bound: IntervalBox::cube(1, -10.0, 10.0),
            disturbance: IntervalBox::cube(4, 0.0, 0.0),
            tau: 0.02,
            horizon: 200,
        },
        other => {
            return Err(DynamicsError::Config(format!(
                "unknown system `{other}` (known: {})",
                BUILTIN_SYSTEMS.join(", ")
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// JSON description of a custom polynomial system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    pub name: String,
    pub state_dim: usize,
    pub input_dim: usize,
    pub time: TimeModel,
    pub dynamics: Vec<Vec<Monomial>>,
    pub safe_region: IntervalBox,
    pub initial_set: IntervalBox,
    pub input_bound: IntervalBox,
    #[serde(default)]
    pub disturbance: Option<IntervalBox>,
    pub tau: f64,
    pub horizon: usize,
}

impl SystemFile {
    pub fn into_spec(self) -> Result<SystemSpec> {
        let disturbance = self
            .disturbance
            .unwrap_or_else(|| IntervalBox::cube(self.state_dim, 0.0, 0.0));
        let spec = SystemSpec {
            name: self.name,
            plant: Plant::Polynomial(PolynomialPlant {
                time: self.time,
                components: self.dynamics,
            }),
            state_dim: self.state_dim,
            input_dim: self.input_dim,
            safe_region: self.safe_region,
            initial_set: self.initial_set,
            input_bound: self.input_bound,
            disturbance,
            tau: self.tau,
            horizon: self.horizon,
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn load_system(path: impl AsRef<Path>) -> Result<SystemSpec> {
    let text = std::fs::read_to_string(path)?;
    let file: SystemFile = serde_json::from_str(&text)?;
    file.into_spec()
}

/// Central-difference Jacobians `(df/ds, df/du)` of the disturbance-free
/// update at `(s, u)`, row-major.
pub fn linearize(spec: &SystemSpec, s: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    const H: f64 = 1e-6;
    let (n, m) = (spec.state_dim, spec.input_dim);
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n * m];
    for j in 0..n {
        let mut sp = s.to_vec();
        let mut sm = s.to_vec();
        sp[j] += H;
        sm[j] -= H;
        let (fp, fm) = (spec.plant.flow(spec.tau, &sp, u), spec.plant.flow(spec.tau, &sm, u));
        for i in 0..n {
            a[i * n + j] = (fp[i] - fm[i]) / (2.0 * H);
        }
    }
    for j in 0..m {
        let mut up = u.to_vec();
        let mut um = u.to_vec();
        up[j] += H;
        um[j] -= H;
        let (fp, fm) = (spec.plant.flow(spec.tau, s, &up), spec.plant.flow(spec.tau, s, &um));
        for i in 0..n {
            b[i * m + j] = (fp[i] - fm[i]) / (2.0 * H);
        }
    }
    (a, b)
}
