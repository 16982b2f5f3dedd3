//! Dense symmetric eigendecomposition, finite-difference Hessians and
//! second-order stationarity checks.

use crate::csvfmt::{fmt_f64, row};
use crate::problems::Objective;
use crate::{Error, Matrix, Result, Vector};
use std::io::Write;

const MAX_DIM: usize = 512;
const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;
const CONVERGENCE_TOL: f64 = 1e-12;

/// Eigenvalues in ascending order with column-aligned orthonormal eigenvectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    eigenvalues: Vector,
    eigenvectors: Matrix,
}

impl SpectrumReport {
    pub fn eigenvalues(&self) -> &Vector {
        &self.eigenvalues
    }

    /// Eigenvectors as the columns of a matrix.
    pub fn eigenvectors(&self) -> &Matrix {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, k: usize) -> Vector {
        self.eigenvectors.column(k).into_owned()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    pub fn v_min(&self) -> Vector {
        self.eigenvector(0)
    }

    /// Iterator over `(eigenvalue, eigenvector)` pairs in ascending order.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, Vector)> + '_ {
        (0..self.dim()).map(|k| (self.eigenvalues[k], self.eigenvector(k)))
    }

    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let v = &self.eigenvectors;
        v * Matrix::from_diagonal(&self.eigenvalues) * v.transpose()
    }

    /// One row per eigenpair: the eigenvalue followed by the eigenvector components.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec!["eigenvalue".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("v{i}")));
        writeln!(out, "{}", row(&header))?;
        for (lambda, v) in self.pairs() {
            let mut fields = vec![fmt_f64(lambda)];
            fields.extend(v.iter().map(|&x| fmt_f64(x)));
            writeln!(out, "{}", row(&fields))?;
        }
        Ok(())
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let d = a.nrows();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Eigenvectors are sign-normalised so that their first component with
/// magnitude above `1e-12` is positive.
pub fn sym_eig(a: &Matrix) -> Result<SpectrumReport> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if rows > MAX_DIM {
        return Err(Error::TooLarge(rows));
    }
    if rows == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteResult("matrix has non-finite entries".into()));
    }
    let asymmetry = (a - a.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * a.amax().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let d = rows;
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = Matrix::identity(d, d);
    let target = CONVERGENCE_TOL * m.norm();

    let mut converged = off_diagonal_norm(&m) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NotConverged { sweeps });
        }
        sweeps += 1;
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_diagonal_norm(&m) <= target;
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let eigenvalues = Vector::from_iterator(d, order.iter().map(|&i| m[(i, i)]));
    let mut eigenvectors = Matrix::zeros(d, d);
    for (k, &i) in order.iter().enumerate() {
        let mut col = v.column(i).into_owned();
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                col = -col;
            }
        }
        eigenvectors.set_column(k, &col);
    }
    Ok(SpectrumReport { eigenvalues, eigenvectors })
}

/// Finite-difference step `1e-5 · max(1, ‖w‖)`.
pub fn default_fd_step(w: &Vector) -> f64 {
    1e-5 * w.norm().max(1.0)
}

/// Central-difference Hessian of the full gradient, symmetrised.
pub fn hessian_fd<O: Objective + ?Sized>(obj: &O, w: &Vector, h: f64) -> Result<Matrix> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {h}")));
    }
    let d = obj.dim();
    if w.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: w.len() });
    }
    let mut b = Matrix::zeros(d, d);
    let mut wp = w.clone();
    for j in 0..d {
        let orig = wp[j];
        wp[j] = orig + h;
        let gp = obj.grad(&wp)?;
        wp[j] = orig - h;
        let gm = obj.grad(&wp)?;
        wp[j] = orig;
        let col = (gp - gm) / (2.0 * h);
        b.set_column(j, &col);
    }
    let sym = (&b + b.transpose()) * 0.5;
    if sym.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteResult("finite-difference Hessian".into()));
    }
    Ok(sym)
}

/// Analytic Hessian when the objective provides one, otherwise finite differences
/// with the default step.
pub fn hessian<O: Objective + ?Sized>(obj: &O, w: &Vector) -> Result<Matrix> {
    match obj.analytic_hessian(w) {
        Some(h) => h,
        None => hessian_fd(obj, w, default_fd_step(w)),
    }
}

/// Eigendecomposition of the Hessian at `w`.
pub fn hessian_spectrum<O: Objective + ?Sized>(obj: &O, w: &Vector) -> Result<SpectrumReport> {
    sym_eig(&hessian(obj, w)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StationarityVerdict {
    pub is_stationary: bool,
    pub grad_norm: f64,
    pub lambda_min: f64,
}

/// Checks `‖∇f(w)‖ ≤ eps_g` and `λ_min(∇²f(w)) ≥ −eps_h`.
pub fn check_second_order_stationary<O: Objective + ?Sized>(
    obj: &O,
    w: &Vector,
    eps_g: f64,
    eps_h: f64,
) -> Result<StationarityVerdict> {
    if !(eps_g > 0.0 && eps_h > 0.0) {
        return Err(Error::InvalidParameter("tolerances must be positive".into()));
    }
    let grad_norm = obj.grad(w)?.norm();
    let lambda_min = hessian_spectrum(obj, w)?.lambda_min();
    Ok(StationarityVerdict { is_stationary: grad_norm <= eps_g && lambda_min >= -eps_h, grad_norm, lambda_min })
}
