//! Numerical laboratory for large Lotka-Volterra systems whose interaction
//! matrix follows a non-centered elliptic Gaussian model
//!
//! ```text
//! B = A / (alpha * sqrt(n)) + (mu / n) * 1 1^T
//! ```
//!
//! where `(A_ij, A_ji)` are standard bivariate Gaussians with correlation
//! `rho`. The crate samples the model, decides feasibility and stability of
//! equilibria, computes saturated equilibria as linear complementarity
//! problems, integrates the dynamics and solves the cavity fixed-point
//! system for the surviving-species fraction.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod csvfmt;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod evt;
pub mod harness;
mod lu;
pub mod matrix;
pub mod random_interactions;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use matrix::Matrix;
