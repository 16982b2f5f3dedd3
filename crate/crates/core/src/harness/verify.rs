//! Property suites over the executable bounds, runnable from the CLI.
//!
//! Every suite reports how many individual checks it ran and how many failed.
//! Expectations are computed exactly by enumeration wherever the objective
//! allows it.

use crate::analysis::{
    check_distance_bound, check_power_iteration_bounds, check_taylor_gap, decompose_trajectory, descent_violations,
    expected_sgd_descent, fit_dimension_slope, initial_gradient_alignment, isotropic_baseline_with, series_bounds,
    verify_cnc_lower_bound, DistanceSetting,
};
use crate::exec::Execution;
use crate::optimizers::{
    derive_pgd_params, derive_sgd_params, run_cnc_pgd_with, run_gd, run_sgd_with, PgdConstants, PgdParams,
    RunOptions, SgdConstants, SmoothnessConstants,
};
use crate::problems::{loss_sigmoid, loss_sigmoid_sharp, make_gaussian_halfspace, QuadraticSaddle, StochasticObjective};
use crate::rngs::{derive_seed, rng_from, tag};
use crate::spectrum::sym_eig;
use crate::{Matrix, Result, Vector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: usize,
    pub failures: usize,
    /// Checks whose precondition did not hold (not failures).
    pub skipped: usize,
    pub detail: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<18} checks={} failures={} skipped={}  {}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.checks,
            self.failures,
            self.skipped,
            self.detail
        )
    }
}

type SuiteFn = fn(Execution) -> Result<SuiteReport>;

/// All suites by name, in the order `verify` runs them.
pub const SUITES: &[(&str, SuiteFn)] = &[
    ("series", suite_series),
    ("power_iteration", suite_power_iteration),
    ("cnc_lower_bound", suite_cnc_lower_bound),
    ("isotropic", suite_isotropic),
    ("descent", suite_descent),
    ("sgd_descent", suite_sgd_descent),
    ("alignment", suite_alignment),
    ("step_expansion", suite_step_expansion),
    ("taylor_gap", suite_taylor_gap),
    ("distance", suite_distance),
    ("eigensolver", suite_eigensolver),
    ("derivation", suite_derivation),
];

/// Runs the named suites (all when `names` is empty). A suite that errors is
/// reported as failed with the error message.
pub fn run_suites(names: &[String], exec: Execution) -> Vec<SuiteReport> {
    SUITES
        .iter()
        .filter(|(n, _)| names.is_empty() || names.iter().any(|x| x == n))
        .map(|(name, f)| {
            f(exec).unwrap_or_else(|e| SuiteReport {
                name,
                checks: 0,
                failures: 1,
                skipped: 0,
                detail: format!("error: {e}"),
            })
        })
        .collect()
}

fn report(name: &'static str, results: &[bool], detail: String) -> SuiteReport {
    SuiteReport {
        name,
        checks: results.len(),
        failures: results.iter().filter(|ok| !**ok).count(),
        skipped: 0,
        detail,
    }
}

fn gaussian(d: usize, seed: u64) -> Vector {
    let mut rng = rng_from(seed);
    Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng))
}

fn ball_point(d: usize, radius: f64, seed: u64) -> Vector {
    let v = gaussian(d, seed);
    let u: f64 = rng_from(seed ^ 0x5eed).random();
    v.normalize() * (radius * u.powf(1.0 / d as f64))
}

pub const SERIES_BETAS: [f64; 4] = [0.01, 0.1, 0.5, 0.9];

/// The three geometric-series inequalities on `β ∈ SERIES_BETAS`, `t ∈ 1..=200`.
pub fn suite_series(_: Execution) -> Result<SuiteReport> {
    let mut results = Vec::new();
    for &beta in &SERIES_BETAS {
        for t in 1..=200 {
            let s = series_bounds(beta, t)?;
            results.extend(s.holds());
        }
    }
    Ok(report("series", &results, "beta in {0.01,0.1,0.5,0.9}, t in 1..=200".into()))
}

/// Diagonal saddle `diag(1, −λ)` with two-point noise along `(1, 1)/√2`.
pub fn power_iteration_saddle(lambda: f64) -> Result<QuadraticSaddle> {
    QuadraticSaddle::with_two_point_noise(
        Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -lambda])),
        Vector::zeros(2),
        1.0,
        &Vector::from_vec(vec![1.0, 1.0]),
    )
}

pub fn suite_power_iteration(_: Execution) -> Result<SuiteReport> {
    let mut results = Vec::new();
    for eta in [0.01, 0.1] {
        for lambda in [0.1, 1.0] {
            let q = power_iteration_saddle(lambda)?;
            let rep = check_power_iteration_bounds(&q, &Vector::zeros(2), 0.1, eta, 100)?;
            results.extend(rep.rows.iter().flat_map(|r| [r.lower_holds, r.upper_holds]));
        }
    }
    Ok(report("power_iteration", &results, "eta in {0.01,0.1}, lambda in {0.1,1}, t <= 100".into()))
}

/// Variance lower bound on 20 random unregularized sigmoid instances.
pub fn suite_cnc_lower_bound(exec: Execution) -> Result<SuiteReport> {
    let per_instance = exec.map_range(20, |i| -> Result<Vec<bool>> {
        let seed = derive_seed(&[tag("cnc-instance"), i as u64]);
        let p = make_gaussian_halfspace(50, 6, 0.5, seed)?.with_loss(loss_sigmoid());
        let w = ball_point(6, 3.0, derive_seed(&[seed, tag("w")]));
        Ok(verify_cnc_lower_bound(&p, &w)?.entries.iter().map(|e| e.holds).collect())
    });
    let mut results = Vec::new();
    for r in per_instance {
        results.extend(r?);
    }
    let n = results.len();
    Ok(report("cnc_lower_bound", &results, format!("20 instances, {n} negative eigenpairs")))
}

pub const ISOTROPIC_DIMS: [usize; 6] = [8, 16, 32, 64, 128, 256];

pub fn suite_isotropic(exec: Execution) -> Result<SuiteReport> {
    let mut results = Vec::new();
    let mut moments = Vec::new();
    for &d in &ISOTROPIC_DIMS {
        let mut e = Vector::zeros(d);
        e[0] = 1.0;
        let m = isotropic_baseline_with(exec, d, 100_000, &[e], derive_seed(&[tag("isotropic-suite"), d as u64]))?[0];
        results.push((m * d as f64 - 1.0).abs() <= 0.05);
        moments.push(m);
    }
    let dims: Vec<f64> = ISOTROPIC_DIMS.iter().map(|&d| d as f64).collect();
    let slope = fit_dimension_slope(&dims, &moments)?;
    results.push((-1.1..=-0.9).contains(&slope));
    Ok(report("isotropic", &results, format!("slope = {slope:.4}")))
}

/// GD trajectories with `η ≤ 1/L` on half-spaces and quadratics.
pub fn suite_descent(exec: Execution) -> Result<SuiteReport> {
    let mut results = Vec::new();
    let halfspace = exec.map_range(10, |i| -> Result<Vec<bool>> {
        let p = make_gaussian_halfspace(40, 4, 0.5, i as u64)?
            .with_loss(loss_sigmoid_sharp(6.0)?)
            .with_reg_weight(0.01)?;
        let eta = 1.0 / p.smoothness_bound();
        let w0 = gaussian(4, derive_seed(&[tag("descent-w0"), i as u64]));
        let traj = run_gd(&p, &w0, eta, 200)?;
        let bad = descent_violations(&traj, eta);
        Ok((0..traj.n_steps()).map(|t| !bad.contains(&t)).collect())
    });
    for r in halfspace {
        results.extend(r?);
    }
    for i in 0..10u64 {
        let mut rng = rng_from(derive_seed(&[tag("descent-quad"), i]));
        let eig: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..1.0)).collect();
        let q = QuadraticSaddle::diagonal(&eig, gaussian(4, i))?;
        let eta = 1.0 / q.smoothness_bound().max(1e-3);
        let traj = run_gd(&q, &gaussian(4, i + 100), eta, 15)?;
        let bad = descent_violations(&traj, eta);
        results.extend((0..traj.n_steps()).map(|t| !bad.contains(&t)));
    }
    Ok(report("descent", &results, "decrease <= -(eta/2)|grad|^2 + 1e-10 per step".into()))
}

/// Exact one-step expected SGD decrease on two-point-noise quadratics.
pub fn suite_sgd_descent(_: Execution) -> Result<SuiteReport> {
    let mut results = Vec::new();
    for i in 0..20u64 {
        let mut rng = rng_from(derive_seed(&[tag("sgd-descent"), i]));
        let eig: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = Matrix::from_diagonal(&Vector::from_vec(eig));
        let q = QuadraticSaddle::with_two_point_noise(h, gaussian(3, i), 0.5, &gaussian(3, i + 7))?;
        let l = q.smoothness_bound().max(1e-3);
        let w = gaussian(3, i + 13);
        results.push(expected_sgd_descent(&q, &w, 0.5 / l, l)?.holds());
    }
    Ok(report("sgd_descent", &results, "20 quadratics, exact enumeration".into()))
}

/// `E[u_t]ᵀd_t ≥ −1e-12` on quadratics with enumerable noise, `η ≤ 1/L`.
pub fn suite_alignment(_: Execution) -> Result<SuiteReport> {
    let mut results = Vec::new();
    for i in 0..10u64 {
        let mut rng = rng_from(derive_seed(&[tag("alignment"), i]));
        let eig: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = Matrix::from_diagonal(&Vector::from_vec(eig));
        let q = QuadraticSaddle::with_two_point_noise(h, gaussian(3, i), 0.3, &gaussian(3, i + 3))?;
        let eta = 1.0 / q.smoothness_bound().max(1e-3);
        let vals = initial_gradient_alignment(&q, &gaussian(3, i + 5), 0.1, eta, 50)?;
        results.extend(vals.iter().map(|&v| v >= -1e-12));
    }
    Ok(report("alignment", &results, "10 quadratics, t <= 50".into()))
}

pub fn suite_step_expansion(_: Execution) -> Result<SuiteReport> {
    let mut results = Vec::new();
    let mut worst: f64 = 0.0;
    let p = make_gaussian_halfspace(40, 4, 0.5, 0)?.with_loss(loss_sigmoid_sharp(6.0)?).with_reg_weight(0.01)?;
    let opts = RunOptions { snapshot_every: 1, log_noise: true };
    for seed in 0..5u64 {
        let w0 = gaussian(4, derive_seed(&[tag("expansion-w0"), seed]));
        let gd = run_gd(&p, &w0, 0.25, 20)?;
        let sgd = run_sgd_with(&p, &w0, 0.25, 20, seed, opts)?;
        for traj in [&gd, &sgd] {
            let exp = decompose_trajectory(traj, &p, 0, 0.25)?;
            for s in &exp.steps {
                let e = s.relative_error(0.25);
                worst = worst.max(e);
                results.push(e < 1e-9);
            }
        }
    }
    let h = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -0.5]));
    let q = QuadraticSaddle::with_two_point_noise(h, Vector::zeros(2), 1.0, &Vector::from_vec(vec![0.0, 1.0]))?;
    let params = PgdParams::practical(0.1, 0.01, 0.01, 1000, 40)?;
    let traj = run_cnc_pgd_with(&q, &Vector::zeros(2), &params, 2, RunOptions::default())?;
    let exp = decompose_trajectory(&traj, &q, 0, 0.1)?;
    results.extend(exp.steps.iter().map(|s| s.delta.amax() <= 1e-12 && s.d.amax() <= 1e-12));
    Ok(report("step_expansion", &results, format!("max relative error {worst:.2e}")))
}

pub fn suite_taylor_gap(_: Execution) -> Result<SuiteReport> {
    let mut results = Vec::new();
    for i in 0..10u64 {
        let p = make_gaussian_halfspace(40, 4, 0.5, i)?.with_loss(loss_sigmoid());
        let rho = p.hessian_lipschitz_bound();
        let pivot = gaussian(4, derive_seed(&[tag("taylor-pivot"), i]));
        let probes: Vec<Vector> =
            (0..20).map(|j| &pivot + ball_point(4, 1.0, derive_seed(&[tag("taylor-probe"), i, j]))).collect();
        results.extend(check_taylor_gap(&p, &pivot, &probes, rho)?.iter().map(|r| r.holds));
        let q = QuadraticSaddle::diagonal(&[1.0, -1.0, 0.5, 2.0], Vector::zeros(4))?;
        results.extend(check_taylor_gap(&q, &pivot, &probes, 0.0)?.iter().map(|r| r.holds));
    }
    Ok(report("taylor_gap", &results, "sigmoid half-spaces and quadratics".into()))
}

/// CNC-PGD on a convex quadratic near its optimum, 30 seeds.
pub fn suite_distance(exec: Execution) -> Result<SuiteReport> {
    let h = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.5]));
    let q = QuadraticSaddle::with_two_point_noise(h, Vector::zeros(2), 0.5, &Vector::from_vec(vec![1.0, 1.0]))?;
    let params = PgdParams::practical(0.5, 0.2, 1.0, 20, 60)?;
    let opts = RunOptions::default();
    let trajs = exec
        .map_range(30, |s| run_cnc_pgd_with(&q, &Vector::from_vec(vec![1e-3, -1e-3]), &params, s as u64, opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ell = (0..q.n_samples())
        .map(|i| q.sample_grad(&Vector::zeros(2), i).map(|g| g.norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(1.0, f64::max)
        * 1.5;
    let c = SmoothnessConstants { l_smooth: 1.0, ell, rho: 1.0, gamma: 0.1, delta: 0.1, f_gap: 1.0 };
    let pivots = trajs[0].perturbation_steps.clone();
    let rep = check_distance_bound(&trajs, &DistanceSetting::Pgd(params), &c, &pivots)?;
    let results: Vec<bool> = rep.rows.iter().map(|r| r.margin >= 0.0).collect();
    let mut out = report("distance", &results, format!("{} windows", rep.windows_checked));
    out.skipped = rep.windows_skipped;
    Ok(out)
}

pub const EIGEN_DIMS: [usize; 4] = [2, 8, 32, 64];

/// Random symmetric matrix with standard normal entries.
pub fn random_symmetric(d: usize, seed: u64) -> Matrix {
    let mut rng = rng_from(seed);
    let a = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    (&a + a.transpose()) * 0.5
}

/// Reconstruction, orthonormality and eigen-equation residuals on 100 random
/// symmetric matrices.
pub fn suite_eigensolver(exec: Execution) -> Result<SuiteReport> {
    let per = exec.map_range(100, |i| -> Result<[bool; 3]> {
        let d = EIGEN_DIMS[i % EIGEN_DIMS.len()];
        let a = random_symmetric(d, derive_seed(&[tag("eigensolver"), i as u64]));
        let s = sym_eig(&a)?;
        let scale = a.amax().max(1.0);
        let v = s.eigenvectors();
        let recon = (&a - s.reconstruct()).amax() < 1e-9 * scale;
        let ortho = (v.transpose() * v - Matrix::identity(d, d)).amax() < 1e-9;
        let resid = s.pairs().all(|(l, x)| (&a * &x - &x * l).norm() < 1e-8 * scale);
        Ok([recon, ortho, resid])
    });
    let mut results = Vec::new();
    for r in per {
        results.extend(r?);
    }
    Ok(report("eigensolver", &results, "100 matrices, d in {2,8,32,64}".into()))
}

/// Ratios `value(ε)/value(ε/2)` of the derived parameters against the exact
/// powers of two, with the logarithmic factors divided out.
pub fn suite_derivation(_: Execution) -> Result<SuiteReport> {
    let c = SmoothnessConstants { l_smooth: 2.0, ell: 1.5, rho: 1.2, gamma: 0.3, delta: 0.1, f_gap: 1.0 };
    let close = |a: f64, b: f64| ((a - b) / b).abs() <= 1e-12;
    let mut results = Vec::new();
    for eps in [0.5, 0.1, 0.01, 1e-3] {
        let a = derive_pgd_params(&c, eps, PgdConstants::default())?;
        let b = derive_pgd_params(&c, eps / 2.0, PgdConstants::default())?;
        results.push(close(a.params.r / b.params.r, 2f64.powf(0.8)));
        results.push(close(a.params.f_thres / b.params.f_thres, 2f64.powf(1.6)));
        results.push(close((a.tr_exact / a.omega) / (b.tr_exact / b.omega), 2f64.powf(-0.4)));
        let a = derive_sgd_params(&c, eps, SgdConstants::default())?;
        let b = derive_sgd_params(&c, eps / 2.0, SgdConstants::default())?;
        results.push(close(a.params.r / b.params.r, 4.0));
        results.push(close(a.params.eta / b.params.eta, 32.0));
        results.push(close(a.f_thres / b.f_thres, 16.0));
    }
    Ok(report("derivation", &results, "eps in {0.5,0.1,0.01,0.001}".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for r in run_suites(&[], Execution::default()) {
            assert!(r.passed(), "{r}");
        }
    }

    #[test]
    fn suite_selection_by_name() {
        let r = run_suites(&["series".to_string()], Execution::Sequential);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].checks, 2400);
        assert!(r[0].to_string().starts_with("PASS series"));
    }
}
