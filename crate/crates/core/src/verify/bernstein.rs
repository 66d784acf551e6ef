//! Tensor-product Bernstein polynomials on a box.

use serde::{Deserialize, Serialize};

use super::{Result, VerifyError};
use crate::geometry::{Interval, IntervalBox};
use crate::nn::{lipschitz_upper_bound, Network, NormKind};

/// A vector-valued map with a known global Lipschitz bound (Euclidean
/// norms). Networks qualify through their layer-norm product.
pub trait LipschitzMap: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;
    fn lipschitz(&self) -> f64;
}

impl LipschitzMap for Network {
    fn input_dim(&self) -> usize {
        Network::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        Network::output_dim(self)
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x)
            .unwrap_or_else(|_| vec![f64::NAN; Network::output_dim(self)])
    }

    fn lipschitz(&self) -> f64 {
        lipschitz_upper_bound(self, NormKind::Operator2)
    }
}

/// Closure with a caller-supplied Lipschitz bound.
pub struct FnMap<F> {
    pub f: F,
    pub input_dim: usize,
    pub output_dim: usize,
    pub lipschitz: f64,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> LipschitzMap for FnMap<F> {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// `coeffs[j]` holds the coefficient tensor of output `j`, dimension 0
/// varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinPoly {
    pub domain: IntervalBox,
    pub degrees: Vec<usize>,
    pub coeffs: Vec<Vec<f64>>,
}

fn binomial_row(d: usize) -> Vec<f64> {
    let mut row = vec![1.0; d + 1];
    for k in 1..d {
        row[k] = row[k - 1] * (d - k + 1) as f64 / k as f64;
    }
    row
}

fn basis(d: usize, t: f64, binom: &[f64]) -> Vec<f64> {
    (0..=d)
        .map(|k| binom[k] * t.powi(k as i32) * (1.0 - t).powi((d - k) as i32))
        .collect()
}

/// One de Casteljau split at `t`; returns (left, right) control points.
fn de_casteljau(c: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let d = c.len() - 1;
    let mut work = c.to_vec();
    let mut left = Vec::with_capacity(d + 1);
    let mut right = vec![0.0; d + 1];
    left.push(work[0]);
    right[d] = work[d];
    for r in 1..=d {
        for k in 0..=d - r {
            work[k] = (1.0 - t) * work[k] + t * work[k + 1];
        }
        left.push(work[0]);
        right[d - r] = work[d - r];
    }
    (left, right)
}

/// Control points of the same polynomial reparametrized to `[a, b] ⊆ [0, 1]`.
fn restrict_1d(c: &[f64], a: f64, b: f64) -> Vec<f64> {
    let (_, right) = de_casteljau(c, a);
    if a >= 1.0 {
        return right;
    }
    let t = ((b - a) / (1.0 - a)).clamp(0.0, 1.0);
    de_casteljau(&right, t).0
}

impl BernsteinPoly {
    pub fn input_dim(&self) -> usize {
        self.degrees.len()
    }

    pub fn output_dim(&self) -> usize {
        self.coeffs.len()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.degrees.len());
        let mut acc = 1;
        for d in &self.degrees {
            s.push(acc);
            acc *= d + 1;
        }
        s
    }

    fn size(&self) -> usize {
        self.degrees.iter().map(|d| d + 1).product()
    }

    fn local(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.domain.lo().iter().zip(self.domain.hi()))
            .map(|(v, (l, h))| if h > l { (v - l) / (h - l) } else { 0.0 })
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let t = self.local(x);
        let bases: Vec<Vec<f64>> = self
            .degrees
            .iter()
            .zip(&t)
            .map(|(d, ti)| basis(*d, *ti, &binomial_row(*d)))
            .collect();
        let size = self.size();
        let mut weights = vec![1.0; size];
        for (idx, w) in weights.iter_mut().enumerate() {
            let mut rest = idx;
            for (i, d) in self.degrees.iter().enumerate() {
                *w *= bases[i][rest % (d + 1)];
                rest /= d + 1;
            }
        }
        self.coeffs
            .iter()
            .map(|c| c.iter().zip(&weights).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Applies `op` to every 1-D fiber of `tensor` along `axis`.
    fn map_fibers(&self, tensor: &[f64], axis: usize, op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let strides = self.strides();
        let len = self.degrees[axis] + 1;
        let stride = strides[axis];
        let mut out = tensor.to_vec();
        let mut fiber = vec![0.0; len];
        for start in 0..tensor.len() {
            if (start / stride) % len != 0 {
                continue;
            }
            for (k, f) in fiber.iter_mut().enumerate() {
                *f = tensor[start + k * stride];
            }
            for (k, v) in op(&fiber).into_iter().enumerate() {
                out[start + k * stride] = v;
            }
        }
        out
    }

    /// Enclosure of each output over `sub ⊆ domain` from the control points
    /// of the restricted polynomial, padded for round-off.
    pub fn range(&self, sub: &IntervalBox) -> Vec<Interval> {
        let lo = self.local(sub.lo());
        let hi = self.local(sub.hi());
        self.coeffs
            .iter()
            .map(|c| {
                let mut t = c.clone();
                for axis in 0..self.degrees.len() {
                    let (a, b) = (lo[axis].clamp(0.0, 1.0), hi[axis].clamp(0.0, 1.0));
                    if a > 0.0 || b < 1.0 {
                        t = self.map_fibers(&t, axis, |f| restrict_1d(f, a, b));
                    }
                }
                let (mn, mx) = t
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
                let pad = round_off_pad(c);
                Interval::new(mn - pad, mx + pad)
            })
            .collect()
    }

    /// Per-output Euclidean bound on the gradient over the whole domain,
    /// from forward differences of the control points.
    pub fn gradient_bounds(&self) -> Vec<f64> {
        let strides = self.strides();
        let widths = self.domain.widths();
        self.coeffs
            .iter()
            .map(|c| {
                let sq: f64 = (0..self.degrees.len())
                    .map(|axis| {
                        let d = self.degrees[axis];
                        let stride = strides[axis];
                        let max_diff = (0..c.len())
                            .filter(|idx| (idx / stride) % (d + 1) < d)
                            .map(|idx| (c[idx + stride] - c[idx]).abs())
                            .fold(0.0, f64::max);
                        let g = if widths[axis] > 0.0 { d as f64 * max_diff / widths[axis] } else { 0.0 };
                        g * g
                    })
                    .sum();
                sq.sqrt()
            })
            .collect()
    }
}

fn round_off_pad(c: &[f64]) -> f64 {
    let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    1e-12 * scale.max(1.0)
}

/// Interpolates `f` at the Bernstein grid points `lo + (k / d) * width`.
pub fn bernstein_fit<M: LipschitzMap + ?Sized>(
    f: &M,
    domain: &IntervalBox,
    degree: usize,
    max_coefficients: usize,
) -> Result<BernsteinPoly> {
    let n = domain.dim();
    if n != f.input_dim() {
        return Err(VerifyError::Dimension(format!(
            "domain has {n} dimensions, map expects {}",
            f.input_dim()
        )));
    }
    if degree == 0 {
        return Err(VerifyError::Config("Bernstein degree must be at least 1".into()));
    }
    if !domain.is_finite() || domain.widths().iter().any(|w| *w <= 0.0) {
        return Err(VerifyError::Config(format!("degenerate approximation domain {domain:?}")));
    }
    let count = (degree + 1)
        .checked_pow(n as u32)
        .and_then(|c| c.checked_mul(f.output_dim()))
        .filter(|c| *c <= max_coefficients)
        .ok_or(VerifyError::Resource {
            degree,
            dim: n,
            cap: max_coefficients,
        })?;
    let size = count / f.output_dim().max(1);
    let degrees = vec![degree; n];
    let mut coeffs = vec![vec![0.0; size]; f.output_dim()];
    let mut x = vec![0.0; n];
    for idx in 0..size {
        let mut rest = idx;
        for i in 0..n {
            let k = rest % (degree + 1);
            rest /= degree + 1;
            x[i] = if k == degree {
                domain.hi()[i]
            } else {
                domain.lo()[i] + (domain.hi()[i] - domain.lo()[i]) * k as f64 / degree as f64
            };
        }
        for (j, v) in f.eval(&x).into_iter().enumerate() {
            coeffs[j][idx] = v;
        }
    }
    if coeffs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(VerifyError::Config("map is not finite on the domain".into()));
    }
    Ok(BernsteinPoly {
        domain: domain.clone(),
        degrees,
        coeffs,
    })
}

/// Certified sup-norm error of `poly` against `f` on the polynomial's
/// domain: maximum error on a uniform grid of `grid_density` points per
/// dimension, plus `(L_f + L_poly) * rho` where `rho` is the Euclidean
/// distance from any point to its nearest grid point. The result bounds
/// every output component.
pub fn approx_error_bound<M: LipschitzMap + ?Sized>(f: &M, poly: &BernsteinPoly, grid_density: usize) -> f64 {
    let g = grid_density.max(2);
    let dom = &poly.domain;
    let n = dom.dim();
    let spacing: Vec<f64> = dom.widths().iter().map(|w| w / (g - 1) as f64).collect();
    let rho = spacing.iter().map(|h| 0.25 * h * h).sum::<f64>().sqrt();
    let total = g.pow(n as u32);
    let mut sampled = vec![0.0f64; poly.output_dim()];
    let mut x = vec![0.0; n];
    for idx in 0..total {
        let mut rest = idx;
        for i in 0..n {
            let k = rest % g;
            rest /= g;
            x[i] = if k == g - 1 { dom.hi()[i] } else { dom.lo()[i] + spacing[i] * k as f64 };
        }
        let (fv, pv) = (f.eval(&x), poly.eval(&x));
        for j in 0..sampled.len() {
            let e = (fv[j] - pv[j]).abs();
            // NaN must not be silently dropped by max
            sampled[j] = if e.is_nan() { f64::INFINITY } else { sampled[j].max(e) };
        }
    }
    let lf = f.lipschitz();
    poly.gradient_bounds()
        .iter()
        .zip(&sampled)
        .map(|(lp, s)| s + (lf + lp) * rho)
        .fold(0.0, f64::max)
        * (1.0 + 1e-9)
        + 1e-12
}
