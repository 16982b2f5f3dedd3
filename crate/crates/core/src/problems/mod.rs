//! Stochastic objectives `f(w) = E_z[f_z(w)]` over a finite sample set.

mod halfspace;
mod loss;
mod mlp;
mod quadratic;

pub use halfspace::{make_gaussian_halfspace, HalfspaceProblem};
pub use loss::{loss_linear, loss_quadratic, loss_sigmoid, loss_sigmoid_sharp, verify_loss_condition, LossFn};
pub use mlp::TinyMlp;
pub use quadratic::QuadraticSaddle;

use crate::{Matrix, Result, Vector};
use rand::RngCore;

/// A smooth objective with full gradients.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, w: &Vector) -> Result<f64>;

    fn grad(&self, w: &Vector) -> Result<Vector>;

    /// Exact Hessian when the objective provides one. Objectives without an
    /// analytic Hessian return `None`; use [`crate::spectrum::hessian`] to fall
    /// back to finite differences.
    fn analytic_hessian(&self, _w: &Vector) -> Option<Result<Matrix>> {
        None
    }
}

/// An objective that is an expectation over a finite, weighted sample set.
pub trait StochasticObjective: Objective {
    fn n_samples(&self) -> usize;

    /// Gradient of the single-sample objective `f_z` for sample `index`.
    fn sample_grad(&self, w: &Vector, index: usize) -> Result<Vector>;

    /// Probability of sample `index`; uniform unless overridden.
    fn sample_weight(&self, _index: usize) -> f64 {
        1.0 / self.n_samples() as f64
    }

    /// Draws one sample index according to [`sample_weight`](Self::sample_weight).
    fn draw_index(&self, rng: &mut dyn RngCore) -> usize {
        let n = self.n_samples();
        (uniform01(rng) * n as f64).floor().min((n - 1) as f64) as usize
    }
}

pub(crate) fn uniform01(rng: &mut dyn RngCore) -> f64 {
    // 53 random mantissa bits
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn check_dim(expected: usize, w: &Vector) -> Result<()> {
    if w.len() != expected {
        return Err(crate::Error::DimensionMismatch { expected, found: w.len() });
    }
    Ok(())
}

/// Any of the shipped objectives, for code that selects the problem from a
/// config at runtime.
#[derive(Clone)]
pub enum Problem {
    Halfspace(HalfspaceProblem),
    Quadratic(QuadraticSaddle),
    Mlp(TinyMlp),
}

impl Problem {
    pub fn kind(&self) -> &'static str {
        match self {
            Problem::Halfspace(_) => "halfspace",
            Problem::Quadratic(_) => "quadratic",
            Problem::Mlp(_) => "mlp",
        }
    }

    fn inner(&self) -> &dyn StochasticObjective {
        match self {
            Problem::Halfspace(p) => p,
            Problem::Quadratic(q) => q,
            Problem::Mlp(m) => m,
        }
    }
}

impl Objective for Problem {
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn value(&self, w: &Vector) -> Result<f64> {
        self.inner().value(w)
    }
    fn grad(&self, w: &Vector) -> Result<Vector> {
        self.inner().grad(w)
    }
    fn analytic_hessian(&self, w: &Vector) -> Option<Result<Matrix>> {
        self.inner().analytic_hessian(w)
    }
}

impl StochasticObjective for Problem {
    fn n_samples(&self) -> usize {
        self.inner().n_samples()
    }
    fn sample_grad(&self, w: &Vector, index: usize) -> Result<Vector> {
        self.inner().sample_grad(w, index)
    }
    fn sample_weight(&self, index: usize) -> f64 {
        self.inner().sample_weight(index)
    }
    fn draw_index(&self, rng: &mut dyn RngCore) -> usize {
        self.inner().draw_index(rng)
    }
}
