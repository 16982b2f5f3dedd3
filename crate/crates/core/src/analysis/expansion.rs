use crate::csvfmt::{comment_block, fmt_f64, row};
use crate::optimizers::Trajectory;
use crate::problems::Objective;
use crate::spectrum::{hessian, sym_eig};
use crate::{Error, Matrix, Result, Vector};
use std::io::Write;

/// Components of `w_{p+t+1} − w̃` around the pivot `w̃ = w_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionStep {
    /// Steps since the pivot step.
    pub t: usize,
    /// Power-iteration term `(I − ηH)ᵗ(w_{p+1} − w̃)`.
    pub u: Vector,
    /// Accumulated stale-Taylor error `Σ (I − ηH)^{t−i}(g(w_{p+i}) − ∇f(w_{p+i}))`.
    pub delta: Vector,
    /// Accumulated pivot gradient `−Σ (I − ηH)^{t−i}∇f(w̃)`.
    pub d: Vector,
    /// Accumulated gradient noise, from the logged noise when available and
    /// otherwise equal to [`zeta_residual`](Self::zeta_residual).
    pub zeta: Vector,
    /// The noise term that makes the expansion reproduce the iterate exactly.
    pub zeta_residual: Vector,
    /// The actual displacement `w_{p+t+1} − w̃`.
    pub displacement: Vector,
}

impl ExpansionStep {
    pub fn reconstruction(&self, eta: f64) -> Vector {
        &self.u + (&self.delta + &self.d + &self.zeta) * eta
    }

    /// `‖displacement − reconstruction‖ / ‖displacement‖` (absolute when the
    /// displacement vanishes).
    pub fn relative_error(&self, eta: f64) -> f64 {
        let err = (&self.displacement - self.reconstruction(eta)).norm();
        let scale = self.displacement.norm();
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    }
}

/// Expansion of the iterates following one pivot, up to the next perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct StepExpansion {
    pub pivot_index: usize,
    pub pivot: Vector,
    pub hessian: Matrix,
    pub eta: f64,
    /// `1 + η·max(0, −λ_min(H))`.
    pub kappa: f64,
    pub steps: Vec<ExpansionStep>,
}

impl StepExpansion {
    pub fn max_relative_error(&self) -> f64 {
        self.steps.iter().map(|s| s.relative_error(self.eta)).fold(0.0, f64::max)
    }

    /// One row per step with the norms of every component.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header = [
            format!("pivot_index = {}", self.pivot_index),
            format!("eta = {}", self.eta),
            format!("kappa = {}", fmt_f64(self.kappa)),
        ];
        out.write_all(comment_block(&header).as_bytes())?;
        writeln!(out, "t,norm_u,norm_delta,norm_d,norm_zeta,norm_displacement,relative_error")?;
        for s in &self.steps {
            let fields = [
                s.t.to_string(),
                fmt_f64(s.u.norm()),
                fmt_f64(s.delta.norm()),
                fmt_f64(s.d.norm()),
                fmt_f64(s.zeta.norm()),
                fmt_f64(s.displacement.norm()),
                fmt_f64(s.relative_error(self.eta)),
            ];
            writeln!(out, "{}", row(fields))?;
        }
        Ok(())
    }
}

/// Splits the iterates after `pivot_index` into power-iteration, stale-Taylor,
/// pivot-gradient and noise components.
///
/// The window covers the pivot step and every following step of size `eta`
/// that is not itself a perturbation; it needs the full iterate of every step
/// in it.
pub fn decompose_trajectory<O: Objective + ?Sized>(
    traj: &Trajectory,
    obj: &O,
    pivot_index: usize,
    eta: f64,
) -> Result<StepExpansion> {
    let n_steps = traj.n_steps();
    if pivot_index >= n_steps {
        return Err(Error::MissingSnapshots(format!(
            "pivot {pivot_index} has no following step (trajectory has {n_steps} steps)"
        )));
    }
    let snapshot = |t: usize| {
        traj.iterate(t).ok_or_else(|| Error::MissingSnapshots(format!("iterate {t} was not retained")))
    };
    let pivot = snapshot(pivot_index)?.clone();
    let h = hessian(obj, &pivot)?;
    let lambda_min = sym_eig(&h)?.lambda_min();
    let kappa = 1.0 + eta * (-lambda_min).max(0.0);
    let d = pivot.len();
    let a = Matrix::identity(d, d) - &h * eta;
    let grad_pivot = obj.grad(&pivot)?;

    let mut end = pivot_index + 1;
    while end < n_steps && !traj.is_perturbed(end) && traj.step_sizes[end] == eta {
        end += 1;
    }

    let first = snapshot(pivot_index + 1)? - &pivot;
    let zero = Vector::zeros(d);
    let mut steps = vec![ExpansionStep {
        t: 0,
        u: first.clone(),
        delta: zero.clone(),
        d: zero.clone(),
        zeta: zero.clone(),
        zeta_residual: zero.clone(),
        displacement: first,
    }];
    for s in pivot_index + 1..end {
        let prev = steps.last().expect("window starts with the pivot step");
        let w = snapshot(s)?;
        let gw = obj.grad(w)?;
        let model = &grad_pivot + &h * (w - &pivot);
        let u = &a * &prev.u;
        let delta = &a * &prev.delta + (model - gw);
        let dd = &a * &prev.d - &grad_pivot;
        let displacement = snapshot(s + 1)? - &pivot;
        let zeta_residual = (&displacement - &u) / eta - &delta - &dd;
        let zeta = match &traj.noise {
            Some(noise) => &a * &prev.zeta + &noise[s],
            None => zeta_residual.clone(),
        };
        steps.push(ExpansionStep { t: s - pivot_index, u, delta, d: dd, zeta, zeta_residual, displacement });
    }
    Ok(StepExpansion { pivot_index, pivot, hessian: h, eta, kappa, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::{run_cnc_pgd, run_cnc_sgd_with, run_gd, run_sgd_with, PgdParams, RunOptions, SgdParams};
    use crate::problems::{make_gaussian_halfspace, QuadraticSaddle};

    #[test]
    fn quadratic_with_zero_pivot_gradient_is_pure_power_iteration() {
        let h = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -0.5]));
        let q = QuadraticSaddle::with_two_point_noise(h, Vector::zeros(2), 1.0, &Vector::from_vec(vec![0.0, 1.0]))
            .unwrap();
        let params = PgdParams::practical(0.1, 0.01, 0.01, 1000, 40).unwrap();
        let traj = run_cnc_pgd(&q, &Vector::zeros(2), &params, 2).unwrap();
        assert_eq!(traj.perturbation_steps, vec![0]);
        let exp = decompose_trajectory(&traj, &q, 0, 0.1).unwrap();
        assert_eq!(exp.kappa, 1.05);
        assert_eq!(exp.steps.len(), 40);
        let start = exp.steps[0].u.norm();
        assert!((start - 0.01).abs() < 1e-15);
        for s in &exp.steps {
            assert!(s.delta.amax() < 1e-12 && s.d.amax() < 1e-12);
            let expected = start * exp.kappa.powi(s.t as i32);
            assert!((s.u.norm() - expected).abs() < 1e-12 * expected);
            assert!((&s.displacement - &s.u).norm() < 1e-12 * expected);
        }
    }

    #[test]
    fn halfspace_gd_reconstructs() {
        let p = make_gaussian_halfspace(30, 4, 0.5, 3).unwrap();
        let traj = run_gd(&p, &Vector::from_vec(vec![0.5, -0.3, 0.2, 0.1]), 0.5, 21).unwrap();
        let exp = decompose_trajectory(&traj, &p, 0, 0.5).unwrap();
        assert_eq!(exp.steps.len(), 21);
        assert!(exp.max_relative_error() < 1e-9);
        for s in &exp.steps {
            assert!(s.zeta_residual.norm() < 1e-9 * (1.0 + s.displacement.norm()) / 0.5);
        }
    }

    #[test]
    fn halfspace_sgd_reconstructs_with_logged_noise() {
        let p = make_gaussian_halfspace(30, 4, 0.5, 3).unwrap();
        let opts = RunOptions { snapshot_every: 1, log_noise: true };
        let traj = run_sgd_with(&p, &Vector::from_vec(vec![0.5, -0.3, 0.2, 0.1]), 0.5, 21, 7, opts).unwrap();
        let exp = decompose_trajectory(&traj, &p, 0, 0.5).unwrap();
        assert!(exp.max_relative_error() < 1e-9);
        for s in &exp.steps {
            assert!((&s.zeta - &s.zeta_residual).norm() < 1e-9 * (1.0 + s.zeta.norm()));
        }
    }

    #[test]
    fn cnc_sgd_window_stops_at_next_large_step() {
        let p = make_gaussian_halfspace(30, 4, 0.5, 3).unwrap();
        let opts = RunOptions { snapshot_every: 1, log_noise: true };
        let params = SgdParams::new(0.5, 0.1, 8, 40).unwrap();
        let traj = run_cnc_sgd_with(&p, &Vector::zeros(4), &params, 1, opts).unwrap();
        let exp = decompose_trajectory(&traj, &p, 8, 0.1).unwrap();
        assert_eq!(exp.steps.len(), 8);
        assert!(exp.max_relative_error() < 1e-9);
    }

    #[test]
    fn thinned_trajectories_are_rejected() {
        let p = make_gaussian_halfspace(10, 2, 0.5, 3).unwrap();
        let opts = RunOptions { snapshot_every: 3, log_noise: false };
        let traj = crate::optimizers::run_gd_with(&p, &Vector::zeros(2), 0.5, 10, opts).unwrap();
        assert!(matches!(decompose_trajectory(&traj, &p, 0, 0.5), Err(Error::MissingSnapshots(_))));
    }
}
