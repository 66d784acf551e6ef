use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BernsteinApprox, Result, VerifyError};
use crate::dynamics::{step_interval, SystemSpec};
use crate::geometry::{Interval, IntervalBox};

/// One closed-loop step over a box of states: per overlapping partition the
/// polynomial range widened by its certified error and clipped to `U`
/// drives the interval extension of the plant; the images are hulled.
pub fn interval_reach_step(
    spec: &SystemSpec,
    current: &IntervalBox,
    approx: &BernsteinApprox,
    omega: &IntervalBox,
) -> Result<IntervalBox> {
    if current.dim() != spec.state_dim || omega.dim() != spec.state_dim {
        return Err(VerifyError::Dimension(format!(
            "state box {} and disturbance {} for a {}-state plant",
            current.dim(),
            omega.dim(),
            spec.state_dim
        )));
    }
    if !approx.domain.contains_box(current) {
        return Err(VerifyError::Coverage(format!("{current:?}")));
    }
    let w = omega.intervals();
    let mut image: Option<IntervalBox> = None;
    for p in &approx.partitions {
        let Some(cell) = current.intersection(&p.region) else {
            continue;
        };
        let u: Vec<Interval> = p
            .poly
            .range(&cell)
            .into_iter()
            .zip(spec.input_bound.intervals())
            .map(|(r, bound)| (r + Interval::symmetric(p.error)).clamp_to(bound))
            .collect();
        let next = IntervalBox::from_intervals(&step_interval(spec, &cell.intervals(), &u, &w));
        image = Some(match image {
            Some(acc) => acc.hull(&next),
            None => next,
        });
    }
    let image = image.ok_or_else(|| VerifyError::Coverage(format!("{current:?}")))?;
    if !image.is_finite() {
        return Err(VerifyError::Coverage(format!("non-finite image of {current:?}")));
    }
    Ok(image)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachResult {
    /// `boxes[t]` over-approximates the states at step `t`; `boxes[0]` is
    /// the initial box.
    pub boxes: Vec<IntervalBox>,
    pub safe: bool,
    /// First step whose box is not inside `X`.
    pub failure_step: Option<usize>,
    /// Set when the analysis had to stop without a verdict.
    pub inconclusive: Option<String>,
    pub partitions: usize,
    pub epsilon: f64,
    pub elapsed_ms: f64,
}

impl ReachResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reach results serialize")
    }
}

/// Iterates [`interval_reach_step`] for `steps` steps under the plant's
/// disturbance box. Safe iff every box stays inside `X`.
pub fn verify_reach(
    spec: &SystemSpec,
    approx: &BernsteinApprox,
    initial: &IntervalBox,
    steps: usize,
) -> Result<ReachResult> {
    if !spec.safe_region.contains_box(initial) {
        return Err(VerifyError::Config(format!("initial box {initial:?} is not inside X")));
    }
    let start = Instant::now();
    let mut boxes = vec![initial.clone()];
    let mut failure_step = None;
    let mut inconclusive = None;
    for t in 1..=steps {
        match interval_reach_step(spec, &boxes[t - 1], approx, &spec.disturbance) {
            Ok(next) => {
                let inside = spec.safe_region.contains_box(&next);
                boxes.push(next);
                if !inside {
                    failure_step = Some(t);
                    break;
                }
            }
            Err(VerifyError::Coverage(msg)) => {
                inconclusive = Some(format!("step {t}: box {msg} leaves the approximation domain"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ReachResult {
        safe: failure_step.is_none() && inconclusive.is_none(),
        boxes,
        failure_step,
        inconclusive,
        partitions: approx.len(),
        epsilon: approx.epsilon(),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// `step,s0_lo,s0_hi,s1_lo,...` rows for plotting.
pub fn reach_to_csv(result: &ReachResult) -> String {
    let dim = result.boxes.first().map_or(0, |b| b.dim());
    let mut out = String::from("step");
    for i in 0..dim {
        let _ = write!(out, ",s{i}_lo,s{i}_hi");
    }
    out.push('\n');
    for (t, b) in result.boxes.iter().enumerate() {
        let _ = write!(out, "{t}");
        for i in 0..dim {
            let _ = write!(out, ",{:?},{:?}", b.lo()[i], b.hi()[i]);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub candidate: IntervalBox,
    pub invariant: bool,
    pub cells: usize,
    pub failed_cells: usize,
    pub diagnostic: Option<String>,
    pub elapsed_ms: f64,
}

impl InvariantResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("invariant results serialize")
    }
}

/// Certifies `candidate` as invariant when the one-step image of each of
/// `cells^d` sub-boxes lies inside it. Sound, not complete.
pub fn verify_invariant(
    spec: &SystemSpec,
    approx: &BernsteinApprox,
    candidate: &IntervalBox,
    cells: usize,
) -> Result<InvariantResult> {
    if !spec.safe_region.contains_box(candidate) {
        return Err(VerifyError::Config(format!("candidate {candidate:?} is not inside X")));
    }
    let start = Instant::now();
    let grid = candidate.subdivide(cells);
    let outcomes: Vec<std::result::Result<bool, String>> = grid
        .par_iter()
        .map(|cell| match interval_reach_step(spec, cell, approx, &spec.disturbance) {
            Ok(image) => Ok(candidate.contains_box(&image)),
            Err(e) => Err(e.to_string()),
        })
        .collect();
    let failed_cells = outcomes.iter().filter(|o| !matches!(o, Ok(true))).count();
    let diagnostic = outcomes.iter().find_map(|o| o.as_ref().err().cloned()).or_else(|| {
        (failed_cells > 0).then(|| format!("{failed_cells} of {} cells map outside the candidate", grid.len()))
    });
    Ok(InvariantResult {
        candidate: candidate.clone(),
        invariant: failed_cells == 0,
        cells: grid.len(),
        failed_cells,
        diagnostic,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
