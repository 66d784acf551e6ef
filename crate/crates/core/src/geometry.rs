//! Intervals, axis-aligned boxes, and the scalar abstraction that lets the
//! plant equations run on either `f64` or [`Interval`].
//!
//! Interval endpoints are computed with the same floating-point operations
//! as the point evaluation. Rounding is monotone, so for every `x` inside
//! the operand intervals the `f64` result of an operation lies inside the
//! interval result. Transcendental functions are not guaranteed monotone
//! by libm, so their non-degenerate enclosures are widened by one ulp.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box bounds have {lo} and {hi} components")]
    DimensionMismatch { lo: usize, hi: usize },
    #[error("empty box: lo[{dim}] = {lo} > hi[{dim}] = {hi}")]
    Empty { dim: usize, lo: f64, hi: f64 },
    #[error("NaN bound in dimension {0}")]
    NaN(usize),
}

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn symmetric(r: f64) -> Self {
        Self { lo: -r, hi: r }
    }

    pub fn width(self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_point(self) -> bool {
        self.lo == self.hi
    }

    pub fn hull(self, other: Self) -> Self {
        Self::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn clamp_to(self, bound: Self) -> Self {
        Self::new(
            self.lo.clamp(bound.lo, bound.hi),
            self.hi.clamp(bound.lo, bound.hi),
        )
    }

    fn widen_ulp(self) -> Self {
        Self::new(self.lo.next_down(), self.hi.next_up())
    }
}

impl Add for Interval {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.lo + o.lo, self.hi + o.hi)
    }
}

impl Sub for Interval {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.lo - o.hi, self.hi - o.lo)
    }
}

impl Neg for Interval {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.hi, -self.lo)
    }
}

impl Mul for Interval {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let p = [
            self.lo * o.lo,
            self.lo * o.hi,
            self.hi * o.lo,
            self.hi * o.hi,
        ];
        Self::new(
            p.iter().copied().fold(f64::INFINITY, f64::min),
            p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

/// Arithmetic shared by point and interval evaluation of plant equations.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn sqr(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// Division by a quantity known to be strictly positive.
    fn div_positive(self, d: Self) -> Self;
    /// Even powers go through `sqr` (tight for intervals); point and
    /// interval evaluation use the same operation order.
    fn powi(self, n: u32) -> Self {
        match n {
            0 => Self::constant(1.0),
            _ if n % 2 == 0 => {
                let s = self.sqr();
                let mut acc = s;
                for _ in 1..n / 2 {
                    acc = acc * s;
                }
                acc
            }
            _ => {
                let mut acc = self;
                for _ in 1..n {
                    acc = acc * self;
                }
                acc
            }
        }
    }
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn sqr(self) -> Self {
        self * self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn div_positive(self, d: Self) -> Self {
        self / d
    }
}

impl Scalar for Interval {
    fn constant(c: f64) -> Self {
        Self::point(c)
    }

    fn sqr(self) -> Self {
        let (a, b) = (self.lo * self.lo, self.hi * self.hi);
        if self.lo >= 0.0 {
            Self::new(a, b)
        } else if self.hi <= 0.0 {
            Self::new(b, a)
        } else {
            Self::new(0.0, a.max(b))
        }
    }

    fn sin(self) -> Self {
        if self.is_point() {
            return Self::point(self.lo.sin());
        }
        if self.width() >= TAU {
            return Self::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.sin(), self.hi.sin());
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        // maxima at pi/2 + 2k pi, minima at -pi/2 + 2k pi
        if contains_periodic(self, FRAC_PI_2) {
            hi = 1.0;
        }
        if contains_periodic(self, -FRAC_PI_2) {
            lo = -1.0;
        }
        Self::new(lo, hi).widen_ulp().clamp_to(Self::new(-1.0, 1.0))
    }

    fn cos(self) -> Self {
        if self.is_point() {
            return Self::point(self.lo.cos());
        }
        if self.width() >= TAU {
            return Self::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.cos(), self.hi.cos());
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        if contains_periodic(self, 0.0) {
            hi = 1.0;
        }
        if contains_periodic(self, PI) {
            lo = -1.0;
        }
        Self::new(lo, hi).widen_ulp().clamp_to(Self::new(-1.0, 1.0))
    }

    fn div_positive(self, d: Self) -> Self {
        assert!(d.lo > 0.0, "divisor interval {d:?} not strictly positive");
        let q = [self.lo / d.lo, self.lo / d.hi, self.hi / d.lo, self.hi / d.hi];
        Self::new(
            q.iter().copied().fold(f64::INFINITY, f64::min),
            q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

/// Whether `iv` contains some `phase + 2k pi`.
fn contains_periodic(iv: Interval, phase: f64) -> bool {
    let k = ((iv.lo - phase) / TAU).ceil();
    phase + k * TAU <= iv.hi
}

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
///
/// Bounds may be infinite (an unconstrained coordinate of a safe region);
/// reachable sets and approximation domains are always finite.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRepr", into = "BoxRepr")]
pub struct IntervalBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BoxRepr {
    lo: Vec<Option<f64>>,
    hi: Vec<Option<f64>>,
}

// JSON has no infinities; unbounded sides are written as null.
impl TryFrom<BoxRepr> for IntervalBox {
    type Error = GeometryError;
    fn try_from(r: BoxRepr) -> Result<Self, Self::Error> {
        Self::new(
            r.lo.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
            r.hi.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
        )
    }
}

impl From<IntervalBox> for BoxRepr {
    fn from(b: IntervalBox) -> Self {
        let f = |v: f64| v.is_finite().then_some(v);
        BoxRepr {
            lo: b.lo.into_iter().map(f).collect(),
            hi: b.hi.into_iter().map(f).collect(),
        }
    }
}

impl fmt::Debug for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.intervals()).finish()
    }
}

impl IntervalBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() {
            return Err(GeometryError::DimensionMismatch {
                lo: lo.len(),
                hi: hi.len(),
            });
        }
        for (dim, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() {
                return Err(GeometryError::NaN(dim));
            }
            if l > h {
                return Err(GeometryError::Empty {
                    dim,
                    lo: *l,
                    hi: *h,
                });
            }
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]` in every one of `dim` coordinates.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim]).expect("valid cube")
    }

    pub fn point(x: &[f64]) -> Self {
        Self::new(x.to_vec(), x.to_vec()).expect("valid point")
    }

    pub fn from_intervals(ivs: &[Interval]) -> Self {
        Self::new(
            ivs.iter().map(|i| i.lo).collect(),
            ivs.iter().map(|i| i.hi).collect(),
        )
        .expect("intervals are ordered")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn interval(&self, i: usize) -> Interval {
        Interval::new(self.lo[i], self.hi[i])
    }

    pub fn intervals(&self) -> Vec<Interval> {
        (0..self.dim()).map(|i| self.interval(i)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l == h)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn contains_box(&self, other: &Self) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    pub fn intersection(&self, other: &Self) -> Option<Self> {
        if other.dim() != self.dim() {
            return None;
        }
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        Self::new(lo, hi).ok()
    }

    pub fn hull(&self, other: &Self) -> Self {
        Self {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    /// Minkowski sum with the symmetric box `[-r_i, r_i]`.
    pub fn minkowski_symmetric(&self, radius: &[f64]) -> Self {
        Self {
            lo: self.lo.iter().zip(radius).map(|(l, r)| l - r).collect(),
            hi: self.hi.iter().zip(radius).map(|(h, r)| h + r).collect(),
        }
    }

    pub fn widest_dim(&self) -> usize {
        self.widths()
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bw), (i, w)| {
                if *w > bw {
                    (i, *w)
                } else {
                    (bi, bw)
                }
            })
            .0
    }

    /// Halves along the widest dimension.
    pub fn bisect(&self) -> (Self, Self) {
        let d = self.widest_dim();
        let mid = 0.5 * (self.lo[d] + self.hi[d]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[d] = mid;
        right.lo[d] = mid;
        (left, right)
    }

    /// Uniform grid of `cells^d` closed sub-boxes covering `self`.
    pub fn subdivide(&self, cells: usize) -> Vec<Self> {
        let cells = cells.max(1);
        let d = self.dim();
        let edges: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..=cells)
                    .map(|k| {
                        if k == cells {
                            self.hi[i]
                        } else {
                            self.lo[i] + (self.hi[i] - self.lo[i]) * k as f64 / cells as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let total = cells.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                let mut lo = vec![0.0; d];
                let mut hi = vec![0.0; d];
                for i in 0..d {
                    let k = idx % cells;
                    idx /= cells;
                    lo[i] = edges[i][k];
                    hi[i] = edges[i][k + 1];
                }
                Self { lo, hi }
            })
            .collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| if l == h { *l } else { rng.random_range(*l..=*h) })
            .collect()
    }

    /// Replaces infinite sides by those of `fallback`.
    pub fn bounded_by(&self, fallback: &Self) -> Self {
        Self {
            lo: self
                .lo
                .iter()
                .zip(&fallback.lo)
                .map(|(a, b)| if a.is_finite() { *a } else { *b })
                .collect(),
            hi: self
                .hi
                .iter()
                .zip(&fallback.hi)
                .map(|(a, b)| if a.is_finite() { *a } else { *b })
                .collect(),
        }
    }
}
