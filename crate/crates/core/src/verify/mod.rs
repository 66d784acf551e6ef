//! Formal analysis of a network controller: piecewise Bernstein
//! over-approximation with certified error, interval reachability of the
//! closed loop, and one-step invariant-box certification.

mod audit;
mod bernstein;
mod reach;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::IntervalBox;

pub use audit::{audit_approximation, audit_invariant, audit_reach};
pub use bernstein::{approx_error_bound, bernstein_fit, BernsteinPoly, FnMap, LipschitzMap};
pub use reach::{
    interval_reach_step, reach_to_csv, verify_invariant, verify_reach, InvariantResult, ReachResult,
};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid verification setting: {0}")]
    Config(String),
    #[error("degree {degree} in {dim} dimensions exceeds the coefficient cap {cap}")]
    Resource { degree: usize, dim: usize, cap: usize },
    #[error("box {0} leaves the approximation domain")]
    Coverage(String),
}

pub type Result<T, E = VerifyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApproxConfig {
    pub degree: usize,
    /// Defaults to 5% of the widest control range when absent.
    pub target_epsilon: Option<f64>,
    /// Error-audit grid points per dimension per partition.
    pub grid_density: usize,
    pub max_partitions: usize,
    pub max_coefficients: usize,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            target_epsilon: None,
            grid_density: 20,
            max_partitions: 4096,
            max_coefficients: 1_000_000,
        }
    }
}

impl ApproxConfig {
    pub fn resolve_target(&self, input_bound: &IntervalBox) -> f64 {
        self.target_epsilon
            .unwrap_or_else(|| 0.05 * input_bound.widths().iter().cloned().fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub region: IntervalBox,
    pub poly: BernsteinPoly,
    /// Certified local bound on `|net - poly|` over `region`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinApprox {
    pub domain: IntervalBox,
    pub partitions: Vec<Partition>,
    pub target_epsilon: f64,
    /// Partition budget ran out before every cell met the target.
    pub target_missed: bool,
    pub fit_ms: f64,
}

impl BernsteinApprox {
    pub fn epsilon(&self) -> f64 {
        self.partitions.iter().map(|p| p.error).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    /// The partition containing `x` (first match on shared faces).
    pub fn locate(&self, x: &[f64]) -> Option<&Partition> {
        self.partitions.iter().find(|p| p.region.contains_point(x))
    }
}

fn fit_cell<M: LipschitzMap + ?Sized>(f: &M, region: &IntervalBox, cfg: &ApproxConfig) -> Result<Partition> {
    let poly = bernstein_fit(f, region, cfg.degree, cfg.max_coefficients)?;
    let error = approx_error_bound(f, &poly, cfg.grid_density);
    Ok(Partition {
        region: region.clone(),
        poly,
        error,
    })
}

/// Fits on `domain`, bisecting cells whose certified error exceeds the
/// target along their widest side. When the partition budget runs out the
/// worst cells are split first and the rest are kept with `target_missed`.
pub fn partition_and_fit<M: LipschitzMap + ?Sized>(
    f: &M,
    domain: &IntervalBox,
    target_epsilon: f64,
    cfg: &ApproxConfig,
) -> Result<BernsteinApprox> {
    if !(target_epsilon > 0.0) {
        return Err(VerifyError::Config(format!("target error {target_epsilon} must be positive")));
    }
    if cfg.max_partitions == 0 {
        return Err(VerifyError::Config("partition budget must be positive".into()));
    }
    let start = Instant::now();
    let mut done: Vec<Partition> = Vec::new();
    let mut frontier = vec![domain.clone()];
    let mut target_missed = false;
    while !frontier.is_empty() {
        let fitted = frontier
            .par_iter()
            .map(|r| fit_cell(f, r, cfg))
            .collect::<Result<Vec<_>>>()?;
        let (ok, mut bad): (Vec<_>, Vec<_>) = fitted.into_iter().partition(|p| p.error <= target_epsilon);
        done.extend(ok);
        // each split adds one cell to the final count
        let budget = cfg.max_partitions.saturating_sub(done.len() + bad.len());
        bad.sort_by(|a, b| b.error.total_cmp(&a.error));
        let keep = bad.split_off(budget.min(bad.len()));
        if !keep.is_empty() {
            target_missed = true;
            done.extend(keep);
        }
        frontier = bad
            .into_iter()
            .flat_map(|p| {
                let (l, r) = p.region.bisect();
                [l, r]
            })
            .collect();
    }
    Ok(BernsteinApprox {
        domain: domain.clone(),
        partitions: done,
        target_epsilon,
        target_missed,
        fit_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer, Network};

    fn tanh_net(gain: f64) -> Network {
        Network::new(vec![
            Layer::new(1, 2, vec![gain, -0.5 * gain], vec![0.1], Activation::Tanh).unwrap(),
            Layer::new(1, 1, vec![2.0], vec![0.0], Activation::Identity).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn constant_map_needs_one_partition() {
        let c = FnMap { f: |_: &[f64]| vec![1.0], input_dim: 2, output_dim: 1, lipschitz: 0.0 };
        let a = partition_and_fit(&c, &IntervalBox::cube(2, -1.0, 1.0), 1e-6, &ApproxConfig::default()).unwrap();
        assert_eq!(a.len(), 1);
        assert!(a.epsilon() < 1e-9 && !a.target_missed);
    }

    #[test]
    fn partitions_tile_the_domain() {
        let dom = IntervalBox::cube(2, -2.0, 2.0);
        let a = partition_and_fit(&tanh_net(3.0), &dom, 0.05, &ApproxConfig::default()).unwrap();
        assert!(a.len() > 1);
        let area: f64 = a.partitions.iter().map(|p| p.region.widths().iter().product::<f64>()).sum();
        assert!((area - 16.0).abs() < 1e-9);
        assert!(a.partitions.iter().all(|p| dom.contains_box(&p.region) && p.error <= 0.05));
    }

    #[test]
    fn steeper_network_needs_more_partitions() {
        let dom = IntervalBox::cube(2, -2.0, 2.0);
        let cfg = ApproxConfig::default();
        let flat = partition_and_fit(&tanh_net(1.0), &dom, 0.1, &cfg).unwrap();
        let steep = partition_and_fit(&tanh_net(6.0), &dom, 0.1, &cfg).unwrap();
        assert!(steep.len() > flat.len());
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let cfg = ApproxConfig { max_partitions: 3, ..ApproxConfig::default() };
        let a = partition_and_fit(&tanh_net(6.0), &IntervalBox::cube(2, -2.0, 2.0), 1e-4, &cfg).unwrap();
        assert!(a.target_missed);
        assert!(a.len() <= 3);
        assert!(a.epsilon() > 1e-4);
        assert!(partition_and_fit(&tanh_net(1.0), &IntervalBox::cube(2, -1.0, 1.0), 0.0, &cfg).is_err());
    }

    #[test]
    fn default_target_is_five_percent_of_control_range() {
        let u = IntervalBox::cube(1, -20.0, 20.0);
        assert_eq!(ApproxConfig::default().resolve_target(&u), 2.0);
    }
}
