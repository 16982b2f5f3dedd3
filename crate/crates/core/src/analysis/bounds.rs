use crate::csvfmt::{fmt_f64, row};
use crate::optimizers::{PgdParams, SgdParams, SmoothnessConstants, Trajectory};
use crate::problems::{Objective, QuadraticSaddle, StochasticObjective};
use crate::spectrum::{hessian, sym_eig};
use crate::{Error, Matrix, Result, Vector};
use std::io::Write;

/// The three geometric-type sums and their closed-form upper bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesBounds {
    pub beta: f64,
    pub t: usize,
    /// `Σ_{i=1}^t (1+β)^{t−i} iᵏ` for `k = 0, 1, 2`.
    pub lhs: [f64; 3],
    /// `2β⁻¹(1+β)ᵗ`, `2β⁻²(1+β)ᵗ`, `6β⁻³(1+β)ᵗ`.
    pub rhs: [f64; 3],
}

impl SeriesBounds {
    pub fn holds(&self) -> [bool; 3] {
        [self.lhs[0] <= self.rhs[0], self.lhs[1] <= self.rhs[1], self.lhs[2] <= self.rhs[2]]
    }
}

pub fn series_bounds(beta: f64, t: usize) -> Result<SeriesBounds> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidBeta(beta));
    }
    if t == 0 {
        return Err(Error::InvalidCount("t must be at least 1".into()));
    }
    let mut lhs = [0.0; 3];
    for i in 1..=t {
        let w = (1.0 + beta).powi((t - i) as i32);
        let x = i as f64;
        lhs[0] += w;
        lhs[1] += w * x;
        lhs[2] += w * x * x;
    }
    let g = (1.0 + beta).powi(t as i32);
    let rhs = [2.0 / beta * g, 2.0 / (beta * beta) * g, 6.0 / beta.powi(3) * g];
    Ok(SeriesBounds { beta, t, lhs, rhs })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIterationRow {
    pub t: usize,
    /// `E‖u_t‖²`, by enumerating the noise of the first step.
    pub expected_sq_norm: f64,
    /// `γ r² κ^{2t}`.
    pub lower: f64,
    /// `max` over noise branches of `‖u_t‖`.
    pub max_norm: f64,
    /// `κᵗ ℓ r`.
    pub upper: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerIterationReport {
    pub gamma: f64,
    pub kappa: f64,
    pub ell: f64,
    pub rows: Vec<PowerIterationRow>,
}

impl PowerIterationReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.lower_holds && r.upper_holds)
    }
}

const BOUND_RTOL: f64 = 1e-10;

/// Exact check of the power-iteration growth `E‖u_t‖² ≥ γr²κ^{2t}` and of
/// `‖u_t‖ ≤ κᵗℓr`, for `u_t = (I − ηH)ᵗ(w₁ − w̃)` with `w₁ = w̃ − r∇f_z(w̃)`.
///
/// `γ` is `E[(vᵀ∇f_z(w̃))²]` along the minimum eigenvector and `ℓ` the largest
/// stochastic-gradient norm at the pivot, both by enumeration.
pub fn check_power_iteration_bounds(
    q: &QuadraticSaddle,
    pivot: &Vector,
    r: f64,
    eta: f64,
    t_max: usize,
) -> Result<PowerIterationReport> {
    let h = q.hessian();
    let spectrum = sym_eig(h)?;
    let lambda_min = spectrum.lambda_min();
    if lambda_min >= 0.0 {
        return Err(Error::NoNegativeCurvature(lambda_min));
    }
    let v = spectrum.v_min();
    let kappa = 1.0 + eta * (-lambda_min);
    let d = q.dim();
    let a = Matrix::identity(d, d) - h * eta;
    let branches: Vec<(Vector, f64)> = (0..q.n_samples())
        .map(|i| Ok((q.sample_grad(pivot, i)? * (-r), q.sample_weight(i))))
        .collect::<Result<_>>()?;
    let ell = branches.iter().map(|(u, _)| u.norm() / r.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    let gamma: f64 = branches.iter().map(|(u, p)| p * (v.dot(u) / r).powi(2)).sum();

    let mut current: Vec<Vector> = branches.iter().map(|(u, _)| u.clone()).collect();
    let mut rows = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        if t > 0 {
            for u in current.iter_mut() {
                *u = &a * &*u;
            }
        }
        let expected_sq_norm: f64 = current.iter().zip(&branches).map(|(u, (_, p))| p * u.norm_squared()).sum();
        let max_norm = current.iter().map(|u| u.norm()).fold(0.0, f64::max);
        let growth = kappa.powi(t as i32);
        let lower = gamma * r * r * growth * growth;
        let upper = growth * ell * r;
        rows.push(PowerIterationRow {
            t,
            expected_sq_norm,
            lower,
            max_norm,
            upper,
            lower_holds: expected_sq_norm >= lower * (1.0 - BOUND_RTOL),
            upper_holds: max_norm <= upper * (1.0 + BOUND_RTOL),
        });
    }
    Ok(PowerIterationReport { gamma, kappa, ell, rows })
}

/// Which distance bound to check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistanceSetting {
    Pgd(PgdParams),
    /// CNC-SGD parameters together with the decrease threshold of the analysis.
    Sgd { params: SgdParams, f_thres: f64 },
}

impl DistanceSetting {
    fn f_thres(&self) -> f64 {
        match self {
            DistanceSetting::Pgd(p) => p.f_thres,
            DistanceSetting::Sgd { f_thres, .. } => *f_thres,
        }
    }

    /// Largest `t` (steps after the pivot) the bound covers.
    fn horizon(&self) -> usize {
        match self {
            DistanceSetting::Pgd(p) => p.tr,
            DistanceSetting::Sgd { params, .. } => params.tr - 1,
        }
    }

    /// Upper bound on `E‖w_{p+t} − w̃‖²`.
    pub fn bound(&self, c: &SmoothnessConstants, t: usize) -> f64 {
        let (l, ell) = (c.l_smooth, c.ell);
        let t = t as f64;
        match *self {
            DistanceSetting::Pgd(p) => {
                let lr2 = (ell * p.r).powi(2);
                2.0 * (2.0 * p.eta * p.f_thres + p.eta * l * lr2) * t + 2.0 * lr2
            }
            DistanceSetting::Sgd { params: p, f_thres } => {
                let lr2 = (ell * p.r).powi(2);
                let slope = 4.0 * f_thres * p.eta
                    + 2.0 * l * p.eta * lr2
                    + 4.0 * (ell * p.eta).powi(2)
                    + 2.0 * l * p.eta.powi(3) * ell * ell * p.tr as f64;
                slope * t + 2.0 * lr2
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceRow {
    pub pivot_index: usize,
    pub t: usize,
    pub mean_sq_distance: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceReport {
    pub n_trajectories: usize,
    pub windows_checked: usize,
    /// Windows where the mean decrease already exceeded `f_thres`.
    pub windows_skipped: usize,
    pub rows: Vec<DistanceRow>,
}

impl DistanceReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.margin >= 0.0)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# trajectories = {}", self.n_trajectories)?;
        writeln!(out, "# windows_checked = {}", self.windows_checked)?;
        writeln!(out, "# windows_skipped = {}", self.windows_skipped)?;
        writeln!(out, "pivot_index,t,mean_sq_distance,bound,margin")?;
        for r in &self.rows {
            let fields =
                [r.pivot_index.to_string(), r.t.to_string(), fmt_f64(r.mean_sq_distance), fmt_f64(r.bound), fmt_f64(r.margin)];
            writeln!(out, "{}", row(fields))?;
        }
        Ok(())
    }
}

pub const MIN_DISTANCE_SEEDS: usize = 30;

/// Empirical check of the distance bound over the windows starting at each
/// of `pivot_indices`, with expectations replaced by means over the
/// trajectories (one per seed).
///
/// The bound is conditional on the mean decrease staying above `−f_thres` in
/// the window; windows where it does not are skipped and counted.
pub fn check_distance_bound(
    trajs: &[Trajectory],
    setting: &DistanceSetting,
    c: &SmoothnessConstants,
    pivot_indices: &[usize],
) -> Result<DistanceReport> {
    if trajs.len() < MIN_DISTANCE_SEEDS {
        return Err(Error::InsufficientSeeds { required: MIN_DISTANCE_SEEDS, found: trajs.len() });
    }
    let m = trajs.len() as f64;
    let horizon = setting.horizon();
    let mut report = DistanceReport { n_trajectories: trajs.len(), windows_checked: 0, windows_skipped: 0, rows: vec![] };
    for &p in pivot_indices {
        let last = trajs.iter().map(|tr| tr.n_steps()).min().unwrap_or(0).min(p + horizon);
        if last < p {
            return Err(Error::MissingSnapshots(format!("pivot {p} lies beyond the trajectories")));
        }
        let hypothesis = (p..=last).all(|s| {
            let mean_drop = trajs.iter().map(|tr| tr.f_values[s] - tr.f_values[p]).sum::<f64>() / m;
            mean_drop >= -setting.f_thres()
        });
        if !hypothesis {
            report.windows_skipped += 1;
            continue;
        }
        report.windows_checked += 1;
        for s in p..=last {
            let mut total = 0.0;
            for tr in trajs {
                let pivot = tr.iterate(p).ok_or_else(|| Error::MissingSnapshots(format!("iterate {p}")))?;
                let w = tr.iterate(s).ok_or_else(|| Error::MissingSnapshots(format!("iterate {s}")))?;
                total += (w - pivot).norm_squared();
            }
            let mean = total / m;
            let bound = setting.bound(c, s - p);
            report.rows.push(DistanceRow { pivot_index: p, t: s - p, mean_sq_distance: mean, bound, margin: bound - mean });
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorGapRow {
    pub distance: f64,
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `‖∇f(w) − ∇f(w̃) − H(w − w̃)‖ ≤ (ρ/2)‖w − w̃‖²` at each probe.
pub fn check_taylor_gap<O: Objective + ?Sized>(
    obj: &O,
    pivot: &Vector,
    probes: &[Vector],
    rho: f64,
) -> Result<Vec<TaylorGapRow>> {
    let h = hessian(obj, pivot)?;
    let g0 = obj.grad(pivot)?;
    probes
        .iter()
        .map(|w| {
            let diff = w - pivot;
            let model = &g0 + &h * &diff;
            let gap = (obj.grad(w)? - model).norm();
            let distance = diff.norm();
            let bound = 0.5 * rho * distance * distance;
            Ok(TaylorGapRow { distance, gap, bound, holds: gap <= bound + 1e-9 + 1e-6 * bound })
        })
        .collect()
}

/// Steps of a full-gradient trajectory where
/// `f(w_{t+1}) − f(w_t) > −(η/2)‖∇f(w_t)‖² + 1e-10`.
pub fn descent_violations(traj: &Trajectory, eta: f64) -> Vec<usize> {
    (0..traj.n_steps())
        .filter(|&t| traj.f_values[t + 1] - traj.f_values[t] > -0.5 * eta * traj.grad_norms[t].powi(2) + 1e-10)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedDescent {
    /// `E_z[f(w − η∇f_z(w))] − f(w)`, by enumeration.
    pub expected_change: f64,
    /// `−η‖∇f(w)‖² + Lη²ℓ²/2` with `ℓ = max_z ‖∇f_z(w)‖`.
    pub bound: f64,
}

impl ExpectedDescent {
    pub fn holds(&self) -> bool {
        self.expected_change <= self.bound + 1e-12 * (1.0 + self.bound.abs())
    }
}

/// Exact one-step expected change of SGD at `w` with smoothness `l_smooth`.
pub fn expected_sgd_descent<O: StochasticObjective + ?Sized>(
    obj: &O,
    w: &Vector,
    eta: f64,
    l_smooth: f64,
) -> Result<ExpectedDescent> {
    let f0 = obj.value(w)?;
    let g = obj.grad(w)?;
    let mut expected = 0.0;
    let mut ell: f64 = 0.0;
    for i in 0..obj.n_samples() {
        let gi = obj.sample_grad(w, i)?;
        ell = ell.max(gi.norm());
        expected += obj.sample_weight(i) * obj.value(&(w - &gi * eta))?;
    }
    Ok(ExpectedDescent {
        expected_change: expected - f0,
        bound: -eta * g.norm_squared() + 0.5 * l_smooth * eta * eta * ell * ell,
    })
}

/// `E[u_t]ᵀd_t` for `t = 0..=t_max` at the pivot, where the first step
/// `w₁ = w̃ − r∇f_z(w̃)` is averaged exactly over the samples.
pub fn initial_gradient_alignment<O: StochasticObjective + ?Sized>(
    obj: &O,
    pivot: &Vector,
    r: f64,
    eta: f64,
    t_max: usize,
) -> Result<Vec<f64>> {
    let h = hessian(obj, pivot)?;
    let d = pivot.len();
    let a = Matrix::identity(d, d) - &h * eta;
    let g = obj.grad(pivot)?;
    let mut mean_u = Vector::zeros(d);
    for i in 0..obj.n_samples() {
        mean_u -= obj.sample_grad(pivot, i)? * (r * obj.sample_weight(i));
    }
    let mut dt = Vector::zeros(d);
    let mut out = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        if t > 0 {
            mean_u = &a * &mean_u;
            dt = &a * &dt - &g;
        }
        out.push(mean_u.dot(&dt));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::{run_cnc_pgd, run_gd, run_sgd};
    use crate::problems::make_gaussian_halfspace;
    use crate::rngs::rng_from;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn series_examples() {
        let s = series_bounds(0.5, 1).unwrap();
        assert_eq!(s.lhs, [1.0, 1.0, 1.0]);
        assert_eq!(s.rhs[0], 6.0);
        assert!(series_bounds(0.9, 50).unwrap().holds().iter().all(|&h| h));
        assert!(matches!(series_bounds(1.0, 3), Err(Error::InvalidBeta(_))));
        assert!(matches!(series_bounds(0.0, 3), Err(Error::InvalidBeta(_))));
    }

    #[test]
    fn series_grid() {
        let mut checks = 0;
        for beta in [0.01, 0.1, 0.5, 0.9] {
            for t in 1..=200 {
                let s = series_bounds(beta, t).unwrap();
                assert!(s.holds().iter().all(|&h| h), "beta {beta} t {t}");
                checks += 3;
            }
        }
        assert_eq!(checks, 2400);
    }

    fn two_point_saddle(lambda: f64, dir: &[f64]) -> QuadraticSaddle {
        QuadraticSaddle::with_two_point_noise(
            Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -lambda])),
            Vector::zeros(2),
            1.0,
            &Vector::from_column_slice(dir),
        )
        .unwrap()
    }

    #[test]
    fn power_iteration_closed_form() {
        let q = two_point_saddle(1.0, &[0.0, 1.0]);
        let rep = check_power_iteration_bounds(&q, &Vector::zeros(2), 0.1, 0.1, 50).unwrap();
        assert!((rep.gamma - 1.0).abs() < 1e-15);
        assert!((rep.kappa - 1.1).abs() < 1e-15);
        for row in &rep.rows {
            let exact = 0.01 * 1.1f64.powi(2 * row.t as i32);
            assert!((row.expected_sq_norm - exact).abs() < 1e-12 * exact);
        }
        assert!(rep.all_hold());
        assert!((rep.rows[0].max_norm - 0.1).abs() < 1e-15);
        assert!(rep.rows[0].max_norm <= rep.ell * 0.1 + 1e-15);
    }

    #[test]
    fn power_iteration_with_orthogonal_noise() {
        let q = two_point_saddle(1.0, &[1.0, 0.0]);
        let rep = check_power_iteration_bounds(&q, &Vector::zeros(2), 0.1, 0.1, 20).unwrap();
        assert_eq!(rep.gamma, 0.0);
        assert!(rep.rows.iter().all(|r| r.lower == 0.0));
        assert!(rep.all_hold());
    }

    #[test]
    fn power_iteration_grid() {
        for eta in [0.01, 0.1] {
            for lambda in [0.1, 1.0] {
                let q = two_point_saddle(lambda, &[0.6, 0.8]);
                let rep = check_power_iteration_bounds(&q, &Vector::zeros(2), 0.1, eta, 100).unwrap();
                assert!(rep.all_hold(), "eta {eta} lambda {lambda}");
            }
        }
        let convex = QuadraticSaddle::diagonal(&[1.0, 2.0], Vector::zeros(2)).unwrap();
        assert!(matches!(
            check_power_iteration_bounds(&convex, &Vector::zeros(2), 0.1, 0.1, 5),
            Err(Error::NoNegativeCurvature(_))
        ));
    }

    fn constants(l: f64, ell: f64) -> SmoothnessConstants {
        SmoothnessConstants { l_smooth: l, ell, rho: 1.0, gamma: 1.0, delta: 0.5, f_gap: 1.0 }
    }

    #[test]
    fn distance_bound_near_convex_optimum() {
        let q = QuadraticSaddle::with_two_point_noise(
            Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.5])),
            Vector::zeros(2),
            1.0,
            &Vector::from_vec(vec![0.6, 0.8]),
        )
        .unwrap();
        let params = PgdParams::practical(0.5, 0.05, 0.01, 10, 30).unwrap();
        let trajs: Vec<Trajectory> = (0..30)
            .map(|s| run_cnc_pgd(&q, &Vector::from_vec(vec![1e-3, -1e-3]), &params, s).unwrap())
            .collect();
        let rep = check_distance_bound(&trajs, &DistanceSetting::Pgd(params), &constants(1.0, 1.0), &[0]).unwrap();
        assert_eq!(rep.windows_checked, 1);
        assert!(rep.all_hold());
        assert_eq!(rep.rows[0].mean_sq_distance, 0.0);
        assert!(rep.rows[0].bound >= 2.0 * (0.05f64).powi(2) - 1e-18);
        assert!(matches!(
            check_distance_bound(&trajs[..5], &DistanceSetting::Pgd(params), &constants(1.0, 1.0), &[0]),
            Err(Error::InsufficientSeeds { required: 30, found: 5 })
        ));
    }

    #[test]
    fn distance_windows_with_fast_escape_are_skipped() {
        let q = two_point_saddle(4.0, &[0.0, 1.0]);
        let params = PgdParams::practical(0.25, 0.5, 0.01, 10, 10).unwrap();
        let trajs: Vec<Trajectory> =
            (0..30).map(|s| run_cnc_pgd(&q, &Vector::zeros(2), &params, s).unwrap()).collect();
        let rep = check_distance_bound(&trajs, &DistanceSetting::Pgd(params), &constants(4.0, 1.0), &[0]).unwrap();
        assert_eq!(rep.windows_skipped, 1);
        assert_eq!(rep.windows_checked, 0);
        assert!(rep.all_hold());
    }

    #[test]
    fn taylor_gap_examples() {
        let q = two_point_saddle(1.0, &[0.0, 1.0]);
        let probes = vec![Vector::from_vec(vec![0.3, 2.0]), Vector::from_vec(vec![-5.0, 1.0])];
        let rows = check_taylor_gap(&q, &Vector::from_vec(vec![0.1, 0.1]), &probes, 0.0).unwrap();
        assert!(rows.iter().all(|r| r.holds && r.gap < 1e-12));

        let p = make_gaussian_halfspace(30, 3, 0.5, 6).unwrap();
        let rho = p.hessian_lipschitz_bound();
        let pivot = Vector::from_vec(vec![0.4, -0.2, 0.9]);
        let mut rng = rng_from(2);
        let probes: Vec<Vector> = (0..50)
            .map(|_| {
                let dir = Vector::from_fn(3, |_, _| StandardNormal.sample(&mut rng)).normalize();
                let len: f64 = StandardNormal.sample(&mut rng);
                &pivot + dir * len.abs().min(1.0)
            })
            .chain(std::iter::once(pivot.clone()))
            .collect();
        let rows = check_taylor_gap(&p, &pivot, &probes, rho).unwrap();
        assert!(rows.iter().all(|r| r.holds));
        assert_eq!(rows.last().unwrap().bound, 0.0);
    }

    #[test]
    fn descent_violation_scan() {
        let q = QuadraticSaddle::diagonal(&[2.0, -1.0], Vector::zeros(2)).unwrap();
        let t = run_gd(&q, &Vector::from_vec(vec![1.0, 0.1]), 0.5, 10).unwrap();
        assert!(descent_violations(&t, 0.5).is_empty());
        let p = make_gaussian_halfspace(20, 3, 1.0, 1).unwrap();
        let t = run_sgd(&p, &Vector::from_vec(vec![3.0, 0.0, 0.0]), 0.5, 20, 1).unwrap();
        assert!(descent_violations(&t, 100.0).len() > 10);
    }

    #[test]
    fn expected_sgd_descent_on_quadratics() {
        for s in 0..20u64 {
            let mut rng = rng_from(s);
            let diag: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            let q = QuadraticSaddle::with_two_point_noise(
                Matrix::from_diagonal(&Vector::from_vec(diag)),
                Vector::from_fn(3, |_, _| StandardNormal.sample(&mut rng)),
                0.7,
                &Vector::from_fn(3, |_, _| StandardNormal.sample(&mut rng)).normalize(),
            )
            .unwrap();
            let l = q.smoothness_bound();
            let w = Vector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            for frac in [0.1, 0.5, 1.0] {
                assert!(expected_sgd_descent(&q, &w, frac / l, l).unwrap().holds(), "seed {s}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn initial_gradient_alignment_is_nonnegative(
            diag in proptest::collection::vec(-1.5f64..1.5, 2..4),
            b in proptest::collection::vec(-1.0f64..1.0, 4),
            frac in 0.05f64..1.0,
        ) {
            let d = diag.len();
            let h = Matrix::from_diagonal(&Vector::from_column_slice(&diag));
            let q = QuadraticSaddle::with_two_point_noise(
                h, Vector::from_column_slice(&b[..d]), 0.5, &Vector::from_element(d, 1.0).normalize(),
            ).unwrap();
            let eta = frac / q.smoothness_bound().max(1e-3);
            let vals = initial_gradient_alignment(&q, &Vector::zeros(d), 0.1, eta, 60).unwrap();
            prop_assert!(vals.iter().all(|&x| x >= -1e-12));
        }
    }
}
