//! Plant update equations, written once over [`Scalar`] so that the same
//! expression tree is evaluated for simulation and for interval
//! reachability.

use serde::{Deserialize, Serialize};

use crate::geometry::Scalar;

/// Cartpole constants (cart mass, pole mass, total mass, gravity, half-length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartpoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub total_mass: f64,
    pub gravity: f64,
    pub length: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            total_mass: 1.1,
            gravity: 9.8,
            length: 1.0,
        }
    }
}

/// One monomial `coeff * prod_j v_j^powers[j]` over the concatenated
/// `(state, control)` vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeModel {
    /// `s(t+1) = p(s, u)`
    Discrete,
    /// `s(t+1) = s + tau * p(s, u)` (forward Euler of `ds/dt = p`)
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialPlant {
    pub time: TimeModel,
    /// One polynomial per state component.
    pub components: Vec<Vec<Monomial>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    VanDerPol,
    System3d,
    Cartpole(CartpoleParams),
    Polynomial(PolynomialPlant),
}

impl Plant {
    /// Disturbance-free successor state.
    pub fn flow<S: Scalar>(&self, tau: f64, s: &[S], u: &[S]) -> Vec<S> {
        let tau = S::constant(tau);
        match self {
            Plant::VanDerPol => {
                let (x, v) = (s[0], s[1]);
                let one = S::constant(1.0);
                vec![x + tau * v, v + tau * ((one - x.sqr()) * v - x + u[0])]
            }
            Plant::System3d => {
                let (x, y, z) = (s[0], s[1], s[2]);
                vec![
                    x + tau * (y + S::constant(0.5) * z.sqr()),
                    y + tau * z,
                    z + tau * u[0],
                ]
            }
            Plant::Cartpole(p) => {
                let c = S::constant;
                let (sin3, cos3) = (s[2].sin(), s[2].cos());
                let psi = (u[0] + c(p.pole_mass * p.length) * s[3].sqr() * sin3)
                    .div_positive(c(p.total_mass));
                let theta_acc = ((c(p.gravity) * sin3 - cos3 * psi) * c(p.total_mass))
                    .div_positive(c(p.length) * (c(1.333) - c(p.pole_mass) * cos3.sqr()));
                let s_acc = (psi - c(p.pole_mass * p.length) * cos3 * theta_acc)
                    .div_positive(c(p.total_mass));
                vec![
                    s[0] + tau * s[1],
                    s[1] + tau * s_acc,
                    s[2] + tau * s[3],
                    s[3] + tau * theta_acc,
                ]
            }
            Plant::Polynomial(poly) => {
                let vars: Vec<S> = s.iter().chain(u).copied().collect();
                poly.components
                    .iter()
                    .enumerate()
                    .map(|(i, terms)| {
                        let p = terms.iter().fold(S::constant(0.0), |acc, m| {
                            let prod = m
                                .powers
                                .iter()
                                .zip(&vars)
                                .filter(|(k, _)| **k > 0)
                                .fold(S::constant(m.coeff), |pr, (k, v)| pr * v.powi(*k));
                            acc + prod
                        });
                        match poly.time {
                            TimeModel::Discrete => p,
                            TimeModel::Continuous => s[i] + tau * p,
                        }
                    })
                    .collect()
            }
        }
    }

    /// Successor with the additive disturbance `w`.
    pub fn step<S: Scalar>(&self, tau: f64, s: &[S], u: &[S], w: &[S]) -> Vec<S> {
        let mut next = self.flow(tau, s, u);
        for (n, wi) in next.iter_mut().zip(w) {
            *n = *n + *wi;
        }
        next
    }
}
