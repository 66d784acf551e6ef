//! Monte-Carlo checks of verification results against concrete closed-loop
//! simulation with the exact controller.

use rand::Rng;
use rayon::prelude::*;

use super::{BernsteinApprox, LipschitzMap, ReachResult};
use crate::dynamics::{clip_control, step, Controller, SystemSpec};
use crate::geometry::IntervalBox;
use crate::seeding::stream_rng;

/// Points drawn uniformly from each partition where `|f - poly|` exceeds
/// the partition's certified error.
pub fn audit_approximation<M: LipschitzMap + ?Sized>(
    f: &M,
    approx: &BernsteinApprox,
    points_per_partition: usize,
    seed: u64,
) -> usize {
    approx
        .partitions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = stream_rng(seed, i as u64);
            (0..points_per_partition)
                .filter(|_| {
                    let x = p.region.sample_uniform(&mut rng);
                    let (fv, pv) = (f.eval(&x), p.poly.eval(&x));
                    fv.iter().zip(&pv).any(|(a, b)| !((a - b).abs() <= p.error))
                })
                .count()
        })
        .sum()
}

fn simulate<R: Rng + ?Sized>(
    spec: &SystemSpec,
    controller: &dyn Controller,
    s0: Vec<f64>,
    steps: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let mut states = vec![s0];
    for _ in 0..steps {
        let s = states.last().expect("nonempty");
        let u = clip_control(&controller.control(s), &spec.input_bound);
        let w = spec.sample_disturbance(rng);
        match step(spec, s, &u, &w) {
            Ok(next) => states.push(next),
            Err(_) => break,
        }
    }
    states
}

/// Simulated trajectories from uniform initial states in `boxes[0]` that
/// leave some per-step box. Empty results (no steps) count nothing.
pub fn audit_reach(
    spec: &SystemSpec,
    controller: &dyn Controller,
    result: &ReachResult,
    samples: usize,
    seed: u64,
) -> usize {
    let steps = result.boxes.len() - 1;
    (0..samples)
        .into_par_iter()
        .filter(|i| {
            let mut rng = stream_rng(seed, *i as u64);
            let s0 = result.boxes[0].sample_uniform(&mut rng);
            let states = simulate(spec, controller, s0, steps, &mut rng);
            states.len() != result.boxes.len()
                || states.iter().zip(&result.boxes).any(|(s, b)| !b.contains_point(s))
        })
        .count()
}

/// Trajectories of `steps` steps from uniform samples of `candidate`;
/// returns them with the number that ever left the candidate.
pub fn audit_invariant(
    spec: &SystemSpec,
    controller: &dyn Controller,
    candidate: &IntervalBox,
    samples: usize,
    steps: usize,
    seed: u64,
) -> (usize, Vec<Vec<Vec<f64>>>) {
    let trajectories: Vec<Vec<Vec<f64>>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let s0 = candidate.sample_uniform(&mut rng);
            simulate(spec, controller, s0, steps, &mut rng)
        })
        .collect();
    let violations = trajectories
        .iter()
        .filter(|t| t.len() != steps + 1 || t.iter().any(|s| !candidate.contains_point(s)))
        .count();
    (violations, trajectories)
}
