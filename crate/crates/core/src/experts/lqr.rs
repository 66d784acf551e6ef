use nalgebra::DMatrix;

use super::{Expert, ExpertError, Result};
use crate::dynamics::{linearize, SystemSpec};

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100_000;

fn riccati_map(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let at_p = a.transpose() * p;
    let s = r + b.transpose() * p * b;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| ExpertError::Synthesis("R + B'PB is singular".into()))?;
    Ok(q + &at_p * a - &at_p * b * s_inv * b.transpose() * p * a)
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    let (n, m) = (a.nrows(), b.ncols());
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(ExpertError::Synthesis("inconsistent A, B, Q, R shapes".into()));
    }
    if r.clone().cholesky().is_none() {
        return Err(ExpertError::Synthesis("R must be positive definite".into()));
    }
    Ok(())
}

/// Discrete algebraic Riccati equation by fixed-point iteration from
/// `P = Q`, to relative tolerance 1e-10.
pub fn solve_dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(a, b, q, r)?;
    let mut p = q.clone();
    for _ in 0..MAX_ITERATIONS {
        let next = riccati_map(a, b, q, r, &p)?;
        // symmetrize against round-off drift
        let next = (&next + next.transpose()) * 0.5;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(ExpertError::Synthesis("Riccati iterate diverged".into()));
        }
        let diff = (&next - &p).norm();
        p = next;
        if diff <= TOLERANCE * p.norm().max(1.0) {
            return Ok(p);
        }
    }
    Err(ExpertError::Synthesis(format!(
        "Riccati iteration did not converge in {MAX_ITERATIONS} steps"
    )))
}

/// Frobenius norm of `P - riccati(P)`.
pub fn riccati_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    riccati_map(a, b, q, r, p).map_or(f64::INFINITY, |next| (p - next).norm())
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Optimal gain `K` (control `u = -K s`) and Riccati solution `P`.
pub fn lqr_synthesize(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = solve_dare(a, b, q, r)?;
    let s = r + b.transpose() * &p * b;
    let k = s
        .try_inverse()
        .ok_or_else(|| ExpertError::Synthesis("R + B'PB is singular".into()))?
        * b.transpose()
        * &p
        * a;
    let rho = spectral_radius(&(a - b * &k));
    if !(rho < 1.0) {
        return Err(ExpertError::Synthesis(format!(
            "closed loop is not stable (spectral radius {rho})"
        )));
    }
    Ok((k, p))
}

/// LQR expert for `spec` linearized at the origin with `Q = q I`,
/// `R = r I`. The gain is multiplied by `scale` (below 1 weakens it).
pub fn lqr_expert(spec: &SystemSpec, q: f64, r: f64, scale: f64, label: impl Into<String>) -> Result<Expert> {
    let (n, m) = (spec.state_dim, spec.input_dim);
    let (a, b) = linearize(spec, &vec![0.0; n], &vec![0.0; m]);
    let a = DMatrix::from_row_slice(n, n, &a);
    let b = DMatrix::from_row_slice(n, m, &b);
    let (k, _) = lqr_synthesize(&a, &b, &(DMatrix::identity(n, n) * q), &(DMatrix::identity(m, m) * r))?;
    let gain: Vec<f64> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| -scale * k[(i, j)])
        .collect();
    Ok(Expert::linear(label, gain, vec![0.0; m]))
}
