use super::config::{ExperimentConfig, InitSpec, MethodSpec};
use super::saddle::{find_saddle_init, SaddlePoint};
use crate::csvfmt::{comment_block, fmt_f64, fmt_opt, row};
use crate::exec::Execution;
use crate::optimizers::{
    run_cnc_pgd_with, run_cnc_sgd_with, run_gd_with, run_iso_pgd_with, run_sgd_with, Method, RunOptions, Trajectory,
};
use crate::problems::{Objective, Problem};
use crate::rngs::{derive_seed, rng_from, tag};
use crate::spectrum::hessian_spectrum;
use crate::{Error, Result, Vector};
use rand_distr::{Distribution, StandardNormal};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// The problem instance and starting point shared by every grid cell.
#[derive(Clone)]
pub struct PreparedProblem {
    pub problem: Problem,
    /// Point the per-seed offsets are applied to.
    pub anchor: Vector,
    pub saddle: Option<SaddlePoint>,
    /// Data seeds discarded because no saddle was found on them.
    pub resamples: usize,
}

/// One per-iteration row of a trajectory file.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub perturbed: bool,
}

#[derive(Clone, Debug)]
pub struct CellOutput {
    pub trajectory: Trajectory,
    pub rows: Vec<TrajectoryRow>,
    pub final_lambda_min: f64,
}

/// Result of one (method, seed) cell; failures are kept alongside successes.
#[derive(Clone, Debug)]
pub struct Cell {
    pub method: Method,
    pub seed: u64,
    pub outcome: std::result::Result<CellOutput, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub seed: u64,
    pub escape_iteration: Option<usize>,
    pub final_f: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub final_lambda_min: Option<f64>,
    /// `"ok"` or `"error: <message>"`.
    pub status: String,
}

pub struct GridResult {
    pub prepared: PreparedProblem,
    pub cells: Vec<Cell>,
    /// Lowest function value seen in any successful cell.
    pub f_best: f64,
    pub summary: Vec<SummaryRow>,
}

impl GridResult {
    pub fn rows_for(&self, m: Method) -> impl Iterator<Item = &SummaryRow> {
        self.summary.iter().filter(move |r| r.method == m)
    }

    /// Median escape iteration of a method, counting runs that never escape
    /// as `+∞`.
    pub fn median_escape(&self, m: Method) -> f64 {
        let mut v: Vec<f64> =
            self.rows_for(m).map(|r| r.escape_iteration.map_or(f64::INFINITY, |t| t as f64)).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    pub fn escape_count(&self, m: Method) -> usize {
        self.rows_for(m).filter(|r| r.escape_iteration.is_some()).count()
    }
}

fn unit_direction(d: usize, seed: u64) -> Vector {
    let mut rng = rng_from(seed);
    loop {
        let v = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

/// Builds the problem and locates the starting anchor, resampling the data
/// seed when the saddle search fails.
pub fn prepare_problem(cfg: &ExperimentConfig) -> Result<PreparedProblem> {
    match &cfg.init {
        InitSpec::Origin => {
            let problem = cfg.problem.build(0)?;
            let anchor = Vector::zeros(problem.dim());
            Ok(PreparedProblem { problem, anchor, saddle: None, resamples: 0 })
        }
        InitSpec::Explicit(p) => {
            let problem = cfg.problem.build(0)?;
            Ok(PreparedProblem { problem, anchor: Vector::from_column_slice(p), saddle: None, resamples: 0 })
        }
        InitSpec::NearSaddle { search_radius, search_starts, eps_g, max_iters, .. } => {
            let mut last_err = None;
            for resample in 0..=cfg.problem.max_resamples() {
                let problem = cfg.problem.build(resample as u64)?;
                let d = problem.dim();
                for a in 0..*search_starts {
                    let start = if *search_radius > 0.0 {
                        unit_direction(d, derive_seed(&[cfg.rng_seed, tag("search"), resample as u64, a as u64]))
                            * *search_radius
                    } else {
                        Vector::zeros(d)
                    };
                    match find_saddle_init(&problem, &start, *eps_g, *max_iters) {
                        Ok(s) => {
                            return Ok(PreparedProblem {
                                anchor: s.point.clone(),
                                problem,
                                saddle: Some(s),
                                resamples: resample,
                            })
                        }
                        Err(e @ Error::NoSaddleFound(_)) => last_err = Some(e),
                        Err(e) => return Err(e),
                    }
                    if *search_radius == 0.0 {
                        break;
                    }
                }
            }
            Err(last_err.unwrap_or_else(|| Error::NoSaddleFound("no search starts".into())))
        }
    }
}

/// Starting point of a seed: the anchor plus, near a saddle, an offset of
/// norm `scale` in a seed-dependent direction shared by all methods.
pub fn initial_point(cfg: &ExperimentConfig, prepared: &PreparedProblem, seed: u64) -> Vector {
    match cfg.init {
        InitSpec::NearSaddle { scale, .. } if scale > 0.0 => {
            let dir = unit_direction(prepared.anchor.len(), derive_seed(&[cfg.rng_seed, tag("offset"), seed]));
            &prepared.anchor + dir * scale
        }
        _ => prepared.anchor.clone(),
    }
}

/// RNG seed owned by the (method, seed) cell.
pub fn cell_seed(cfg: &ExperimentConfig, method: Method, seed: u64) -> u64 {
    derive_seed(&[cfg.rng_seed, tag(method.tag()), seed])
}

fn run_method(spec: &MethodSpec, obj: &Problem, w0: &Vector, t_max: usize, rs: u64, opts: RunOptions) -> Result<Trajectory> {
    match spec {
        MethodSpec::Gd { eta } => run_gd_with(obj, w0, *eta, t_max, opts),
        MethodSpec::Sgd { eta } => run_sgd_with(obj, w0, *eta, t_max, rs, opts),
        MethodSpec::IsoPgd { eta, r, g_thres, tr } => {
            run_iso_pgd_with(obj, w0, *eta, *r, *g_thres, *tr, t_max, rs, opts)
        }
        MethodSpec::CncPgd(p) => {
            let mut p = *p;
            p.t_max = t_max;
            run_cnc_pgd_with(obj, w0, &p, rs, opts)
        }
        MethodSpec::CncSgd(p) => {
            let mut p = *p;
            p.t_max = t_max;
            run_cnc_sgd_with(obj, w0, &p, rs, opts)
        }
    }
}

fn run_cell(cfg: &ExperimentConfig, prepared: &PreparedProblem, spec: &MethodSpec, seed: u64) -> Result<CellOutput> {
    let obj = &prepared.problem;
    let w0 = initial_point(cfg, prepared, seed);
    let opts = RunOptions { snapshot_every: cfg.snapshot_thinning, log_noise: false };
    let traj = run_method(spec, obj, &w0, cfg.t_max, cell_seed(cfg, spec.method(), seed), opts)?;
    let t_end = traj.n_steps();
    let mut rows = Vec::with_capacity(t_end + 1);
    let mut final_lambda_min = f64::NAN;
    for t in 0..=t_end {
        let (mut lmin, mut lmax) = (None, None);
        if t % cfg.eig_every == 0 || t == t_end {
            if let Some(w) = traj.iterate(t) {
                let s = hessian_spectrum(obj, w)?;
                lmin = Some(s.lambda_min());
                lmax = Some(s.lambda_max());
                if t == t_end {
                    final_lambda_min = s.lambda_min();
                }
            }
        }
        rows.push(TrajectoryRow {
            iter: t,
            f: traj.f_values[t],
            grad_norm: traj.grad_norms[t],
            lambda_min: lmin,
            lambda_max: lmax,
            perturbed: traj.is_perturbed(t),
        });
    }
    Ok(CellOutput { trajectory: traj, rows, final_lambda_min })
}

/// First `t` with `f_t ≤ f_0 − fraction·(f_0 − f_best)`, if the drop is positive.
pub fn escape_iteration(f_values: &[f64], f_best: f64, fraction: f64) -> Option<usize> {
    let f0 = *f_values.first()?;
    let gap = f0 - f_best;
    if gap.is_nan() || gap <= 0.0 {
        return None;
    }
    let threshold = f0 - fraction * gap;
    f_values.iter().position(|&f| f <= threshold)
}

/// Runs every (method, seed) cell in memory.
pub fn run_grid(cfg: &ExperimentConfig, exec: Execution) -> Result<GridResult> {
    let prepared = prepare_problem(cfg)?;
    let jobs: Vec<(usize, u64)> =
        (0..cfg.methods.len()).flat_map(|m| cfg.seeds.iter().map(move |&s| (m, s))).collect();
    let cells: Vec<Cell> = exec.map(&jobs, |&(mi, seed)| {
        let spec = &cfg.methods[mi];
        Cell { method: spec.method(), seed, outcome: run_cell(cfg, &prepared, spec, seed).map_err(|e| e.to_string()) }
    });
    let f_best = cells
        .iter()
        .filter_map(|c| c.outcome.as_ref().ok())
        .flat_map(|o| o.trajectory.f_values.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let summary = cells
        .iter()
        .map(|c| match &c.outcome {
            Ok(o) => SummaryRow {
                method: c.method,
                seed: c.seed,
                escape_iteration: escape_iteration(&o.trajectory.f_values, f_best, cfg.escape_drop_fraction),
                final_f: Some(o.trajectory.final_f()),
                final_grad_norm: Some(o.trajectory.final_grad_norm()),
                final_lambda_min: Some(o.final_lambda_min),
                status: "ok".into(),
            },
            Err(msg) => SummaryRow {
                method: c.method,
                seed: c.seed,
                escape_iteration: None,
                final_f: None,
                final_grad_norm: None,
                final_lambda_min: None,
                status: format!("error: {}", msg.replace([',', '\n'], ";")),
            },
        })
        .collect();
    Ok(GridResult { prepared, cells, f_best, summary })
}

/// Files written by [`run_experiment`].
pub struct ExperimentOutput {
    pub grid: GridResult,
    pub files: Vec<PathBuf>,
}

pub fn trajectory_file_name(method: Method, seed: u64) -> String {
    format!("traj_{}_seed{}.csv", method.tag(), seed)
}

fn header(cfg: &ExperimentConfig, prepared: &PreparedProblem, extra: &[String]) -> String {
    let mut lines = cfg.echo.clone();
    lines.push(format!("data_resamples = {}", prepared.resamples));
    if let Some(s) = &prepared.saddle {
        lines.push(format!(
            "saddle: grad_norm = {}, lambda_min = {}, search_iterations = {}",
            fmt_f64(s.grad_norm),
            fmt_f64(s.lambda_min),
            s.iterations
        ));
    }
    lines.extend_from_slice(extra);
    comment_block(&lines)
}

pub fn write_trajectory_csv<W: Write>(mut out: W, rows: &[TrajectoryRow]) -> Result<()> {
    writeln!(out, "iter,f,grad_norm,lambda_min,lambda_max,perturbed_flag")?;
    for r in rows {
        let fields = [
            r.iter.to_string(),
            fmt_f64(r.f),
            fmt_f64(r.grad_norm),
            fmt_opt(r.lambda_min),
            fmt_opt(r.lambda_max),
            u8::from(r.perturbed).to_string(),
        ];
        writeln!(out, "{}", row(fields))?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut out: W, rows: &[SummaryRow]) -> Result<()> {
    writeln!(out, "method,seed,escape_iteration,final_f,final_grad_norm,final_lambda_min,status")?;
    for r in rows {
        let fields = [
            r.method.tag().to_string(),
            r.seed.to_string(),
            r.escape_iteration.map(|t| t.to_string()).unwrap_or_default(),
            fmt_opt(r.final_f),
            fmt_opt(r.final_grad_norm),
            fmt_opt(r.final_lambda_min),
            r.status.clone(),
        ];
        writeln!(out, "{}", row(fields))?;
    }
    Ok(())
}

/// Runs the grid and writes one trajectory file per successful cell,
/// `summary.csv` and (for half-space problems) `dataset.csv` to `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, exec: Execution) -> Result<ExperimentOutput> {
    let grid = run_grid(cfg, exec)?;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for cell in &grid.cells {
        let Ok(o) = &cell.outcome else { continue };
        let path = out_dir.join(trajectory_file_name(cell.method, cell.seed));
        let mut extra = vec![format!("method = {}", cell.method), format!("seed = {}", cell.seed)];
        extra.extend(o.trajectory.params.iter().map(|(k, v)| format!("{k} = {v}")));
        let mut buf = header(cfg, &grid.prepared, &extra).into_bytes();
        write_trajectory_csv(&mut buf, &o.rows)?;
        fs::write(&path, buf)?;
        files.push(path);
    }
    let path = out_dir.join("summary.csv");
    let extra = [
        format!("f_best = {}", fmt_f64(grid.f_best)),
        format!("escape_threshold = f0 - {} * (f0 - f_best)", fmt_f64(cfg.escape_drop_fraction)),
    ];
    let mut buf = header(cfg, &grid.prepared, &extra).into_bytes();
    write_summary_csv(&mut buf, &grid.summary)?;
    fs::write(&path, buf)?;
    files.push(path);
    if let Problem::Halfspace(p) = &grid.prepared.problem {
        let path = out_dir.join("dataset.csv");
        let mut buf = header(cfg, &grid.prepared, &[]).into_bytes();
        p.write_csv(&mut buf)?;
        fs::write(&path, buf)?;
        files.push(path);
    }
    Ok(ExperimentOutput { grid, files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::parse_config;

    fn quadratic_cfg(extra: &str) -> ExperimentConfig {
        parse_config(&format!(
            "seeds = [0, 1]\nmethods = [\"gd\", \"sgd\"]\nt_max = 30\n{extra}\n[problem]\nkind = \"quadratic\"\neigenvalues = [1.0, -0.5]\nlinear = [0.2, 0.1]\nnoise_sigma = 0.1\n"
        ))
        .unwrap()
    }

    #[test]
    fn escape_iteration_definition() {
        let f = [1.0, 0.99, 0.95, 0.5, 0.0];
        assert_eq!(escape_iteration(&f, 0.0, 0.05), Some(2));
        assert_eq!(escape_iteration(&f, 0.0, 0.5), Some(3));
        assert_eq!(escape_iteration(&[1.0, 1.0], 1.0, 0.05), None);
        assert_eq!(escape_iteration(&[], 0.0, 0.05), None);
    }

    #[test]
    fn saddle_init_on_quadratic() {
        let cfg = quadratic_cfg("");
        let p = prepare_problem(&cfg).unwrap();
        let exact = Vector::from_vec(vec![-0.2, 0.2]);
        assert!((&p.anchor - exact).norm() < 1e-9);
        let w0 = initial_point(&cfg, &p, 3);
        assert!(((&w0 - &p.anchor).norm() - 1e-4).abs() < 1e-12);
        assert_eq!(w0, initial_point(&cfg, &p, 3));
        assert_ne!(w0, initial_point(&cfg, &p, 4));
    }

    #[test]
    fn zero_horizon_gives_initial_row_only() {
        let mut cfg = quadratic_cfg("");
        cfg.t_max = 0;
        let g = run_grid(&cfg, Execution::Sequential).unwrap();
        for c in &g.cells {
            let o = c.outcome.as_ref().unwrap();
            assert_eq!(o.rows.len(), 1);
            assert!(o.rows[0].lambda_min.is_some());
        }
    }

    #[test]
    fn eigenvalues_follow_the_logging_interval() {
        let cfg = quadratic_cfg("snapshot_thinning = 5\neig_every = 10");
        let g = run_grid(&cfg, Execution::Sequential).unwrap();
        let rows = &g.cells[0].outcome.as_ref().unwrap().rows;
        assert_eq!(rows.len(), 31);
        for r in rows {
            assert_eq!(r.lambda_min.is_some(), r.iter % 10 == 0 || r.iter == 30, "iter {}", r.iter);
        }
        assert_eq!(rows[0].lambda_min, Some(-0.5));
        assert_eq!(rows[0].lambda_max, Some(1.0));
    }

    #[test]
    fn execution_modes_agree() {
        let cfg = quadratic_cfg("");
        let a = run_grid(&cfg, Execution::Sequential).unwrap();
        let b = run_grid(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a.summary, b.summary);
    }
}
