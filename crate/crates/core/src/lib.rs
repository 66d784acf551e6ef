//! Learning a single robust neural controller from several expert
//! controllers, and analyzing it formally.
//!
//! The pipeline: experts ([`experts`]) are combined by a learned,
//! state-dependent weighting trained with PPO ([`mixing`]); the mixed
//! controller is distilled into a small network with adversarial inputs
//! and L2 regularization ([`distill`]); controllers are compared by safe
//! control rate and energy under attack and noise ([`eval`]); the student
//! is abstracted by Bernstein polynomials with certified error and checked
//! with interval reachability ([`verify`]).

pub mod dynamics;
pub mod experts;
pub mod geometry;
pub mod mixing;
pub mod nn;
pub mod seeding;
pub mod distill;
pub mod eval;
pub mod verify;
pub mod pipeline;
