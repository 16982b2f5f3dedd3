//! Saddle-point escaping with stochastic gradients.
//!
//! The crate is organised in five layers:
//!
//! * [`problems`]: stochastic objectives with exact gradients, per-sample
//!   gradients and (where cheap) analytic Hessians: learning half-spaces,
//!   quadratic saddles with enumerable noise, and a tiny sigmoid MLP.
//! * [`spectrum`]: a cyclic Jacobi eigensolver, finite-difference Hessians and
//!   second-order stationarity certificates.
//! * [`optimizers`]: GD, SGD, isotropically perturbed GD, CNC-PGD
//!   (gradient descent perturbed by single stochastic-gradient steps) and
//!   CNC-SGD (SGD with a periodically enlarged step), plus the ε-driven
//!   parameter derivations.
//! * [`analysis`]: measurement of the correlated-negative-curvature constant,
//!   the half-space variance lower bound, trajectory step expansions and the
//!   executable forms of the convergence analysis bounds.
//! * [`harness`]: config parsing, saddle initialisation, method × seed grids
//!   and deterministic CSV output.
//!
//! Data-parallel loops (experiment grids, Monte-Carlo baselines, instance
//! sweeps) go through [`exec::Execution`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.
//! Results never depend on the execution mode.

pub mod analysis;
pub mod csvfmt;
pub mod error;
pub mod exec;
pub mod harness;
pub mod optimizers;
pub mod problems;
pub mod rngs;
pub mod spectrum;

pub use error::{Error, Result};
pub use exec::Execution;

/// Dense column vector used for parameters and gradients.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for Hessians and eigenvector bases.
pub type Matrix = nalgebra::DMatrix<f64>;
