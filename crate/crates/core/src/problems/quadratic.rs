use super::{check_dim, uniform01, Objective, StochasticObjective};
use crate::{Error, Matrix, Result, Vector};
use rand::RngCore;

/// `f(w) = ½ wᵀHw + bᵀw` whose per-sample gradients add a draw `ξ` from a
/// finite zero-mean noise distribution: `∇f_i(w) = Hw + b + ξ_i`.
///
/// All expectations over the noise can be computed exactly by enumeration.
#[derive(Clone, Debug)]
pub struct QuadraticSaddle {
    hessian: Matrix,
    linear: Vector,
    noise: Vec<Vector>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl QuadraticSaddle {
    /// Noise-free quadratic (a single zero noise atom).
    pub fn new(hessian: Matrix, linear: Vector) -> Result<Self> {
        let d = linear.len();
        Self::with_noise(hessian, linear, vec![(Vector::zeros(d), 1.0)])
    }

    pub fn with_noise(hessian: Matrix, linear: Vector, noise: Vec<(Vector, f64)>) -> Result<Self> {
        let d = linear.len();
        if d == 0 {
            return Err(Error::InvalidProblem("dimension must be at least 1".into()));
        }
        if hessian.nrows() != d || hessian.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: hessian.nrows() });
        }
        let scale = hessian.amax().max(1.0);
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        if noise.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut mean = Vector::zeros(d);
        let mut total = 0.0;
        let mut mag = 0.0f64;
        for (xi, p) in &noise {
            check_dim(d, xi)?;
            if !(*p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidProblem(format!("noise probability {p} must be positive")));
            }
            mean.axpy(*p, xi, 1.0);
            total += p;
            mag = mag.max(xi.amax());
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProblem(format!("noise probabilities sum to {total}, not 1")));
        }
        if mean.amax() > 1e-12 * mag.max(1.0) {
            return Err(Error::InvalidProblem(format!("noise mean {:e} is not zero", mean.amax())));
        }
        let (noise, probs): (Vec<_>, Vec<_>) = noise.into_iter().unzip();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { hessian: (&hessian + hessian.transpose()) * 0.5, linear, noise, probs, cumulative })
    }

    /// Two-point noise `{+σu, -σu}` with probability ½ each; `u` is normalised.
    pub fn with_two_point_noise(hessian: Matrix, linear: Vector, sigma: f64, direction: &Vector) -> Result<Self> {
        let n = direction.norm();
        if n.is_nan() || n <= 0.0 {
            return Err(Error::InvalidProblem("noise direction must be nonzero".into()));
        }
        let u = direction * (sigma / n);
        Self::with_noise(hessian, linear, vec![(u.clone(), 0.5), (-u, 0.5)])
    }

    /// Diagonal Hessian with the given eigenvalues.
    pub fn diagonal(eigenvalues: &[f64], linear: Vector) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&Vector::from_column_slice(eigenvalues)), linear)
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }
    pub fn linear(&self) -> &Vector {
        &self.linear
    }
    pub fn noise(&self) -> impl Iterator<Item = (&Vector, f64)> {
        self.noise.iter().zip(self.probs.iter().copied())
    }

    /// Replaces the noise distribution, keeping `H` and `b`.
    pub fn set_noise(self, noise: Vec<(Vector, f64)>) -> Result<Self> {
        Self::with_noise(self.hessian, self.linear, noise)
    }

    /// Largest absolute eigenvalue bound `max_i Σ_j |H_ij|`, an upper bound on
    /// the gradient-Lipschitz constant.
    pub fn smoothness_bound(&self) -> f64 {
        self.hessian.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

impl Objective for QuadraticSaddle {
    fn dim(&self) -> usize {
        self.linear.len()
    }
    fn value(&self, w: &Vector) -> Result<f64> {
        check_dim(self.dim(), w)?;
        Ok(0.5 * w.dot(&(&self.hessian * w)) + self.linear.dot(w))
    }
    fn grad(&self, w: &Vector) -> Result<Vector> {
        check_dim(self.dim(), w)?;
        Ok(&self.hessian * w + &self.linear)
    }
    fn analytic_hessian(&self, w: &Vector) -> Option<Result<Matrix>> {
        Some(check_dim(self.dim(), w).map(|_| self.hessian.clone()))
    }
}

impl StochasticObjective for QuadraticSaddle {
    fn n_samples(&self) -> usize {
        self.noise.len()
    }
    fn sample_grad(&self, w: &Vector, index: usize) -> Result<Vector> {
        let xi = self.noise.get(index).ok_or(Error::IndexOutOfRange { index, n: self.noise.len() })?;
        Ok(self.grad(w)? + xi)
    }
    fn sample_weight(&self, index: usize) -> f64 {
        self.probs[index]
    }
    fn draw_index(&self, rng: &mut dyn RngCore) -> usize {
        let u = uniform01(rng);
        self.cumulative.iter().position(|&c| u < c).unwrap_or(self.noise.len() - 1)
    }
}
