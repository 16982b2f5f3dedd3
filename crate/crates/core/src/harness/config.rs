//! Experiment configuration documents.
//!
//! A config is a TOML document. Every key is optional in the document itself;
//! missing values are filled from the named preset (if any) and then from the
//! built-in defaults. Unknown keys are rejected. The fully resolved document is
//! echoed at the top of every CSV the harness writes.

use crate::optimizers::{
    derive_pgd_params, derive_sgd_params, Method, PgdConstants, PgdParams, SgdConstants, SgdParams,
    SmoothnessConstants,
};
use crate::problems::{
    loss_linear, loss_quadratic, loss_sigmoid, loss_sigmoid_sharp, make_gaussian_halfspace, LossFn, Problem,
    QuadraticSaddle, TinyMlp,
};
use crate::{Error, Result, Vector};
use serde::{Deserialize, Serialize};

/// Name of the built-in preset reproducing the escaping-saddles experiment.
pub const HALFSPACE_PRESET: &str = "halfspaces-appendix-e";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub preset: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub methods: Option<Vec<String>>,
    pub t_max: Option<usize>,
    pub eta: Option<f64>,
    pub rng_seed: Option<u64>,
    pub output_dir: Option<String>,
    pub snapshot_thinning: Option<usize>,
    pub eig_every: Option<usize>,
    pub escape_drop_fraction: Option<f64>,
    pub problem: Option<RawProblem>,
    pub init: Option<RawInit>,
    pub gd: Option<RawMethod>,
    pub sgd: Option<RawMethod>,
    pub iso_pgd: Option<RawMethod>,
    pub cnc_pgd: Option<RawMethod>,
    pub cnc_sgd: Option<RawMethod>,
    pub measure: Option<RawMeasure>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProblem {
    pub kind: Option<String>,
    // halfspace
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub separation: Option<f64>,
    pub data_seed: Option<u64>,
    pub loss: Option<String>,
    pub sharpness: Option<f64>,
    pub reg_weight: Option<f64>,
    pub max_resamples: Option<usize>,
    // quadratic
    pub eigenvalues: Option<Vec<f64>>,
    pub linear: Option<Vec<f64>>,
    pub noise_sigma: Option<f64>,
    pub noise_direction: Option<Vec<f64>>,
    // mlp
    pub layer_sizes: Option<Vec<usize>>,
    pub n_points: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInit {
    pub mode: Option<String>,
    pub scale: Option<f64>,
    pub search_radius: Option<f64>,
    pub search_starts: Option<usize>,
    pub eps_g: Option<f64>,
    pub max_iters: Option<usize>,
    pub point: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMethod {
    pub eta: Option<f64>,
    pub r: Option<f64>,
    pub g_thres: Option<f64>,
    pub tr: Option<usize>,
    pub derive: Option<RawDerive>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDerive {
    pub eps: f64,
    pub l_smooth: f64,
    pub ell: f64,
    pub rho: f64,
    pub gamma: f64,
    pub delta: f64,
    pub f_gap: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMeasure {
    pub family: Option<String>,
    pub values: Option<Vec<usize>>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub separation: Option<f64>,
    pub data_seed: Option<u64>,
    pub iso_draws: Option<usize>,
    pub point_radius: Option<f64>,
    pub weight_scale: Option<f64>,
}

/// Loss selection for half-space problems.
#[derive(Clone, Debug, PartialEq)]
pub enum LossSpec {
    Sigmoid,
    SigmoidSharp(f64),
    Linear,
    Quadratic,
}

impl LossSpec {
    pub fn build(&self) -> Result<LossFn> {
        match *self {
            LossSpec::Sigmoid => Ok(loss_sigmoid()),
            LossSpec::SigmoidSharp(k) => loss_sigmoid_sharp(k),
            LossSpec::Linear => Ok(loss_linear()),
            LossSpec::Quadratic => Ok(loss_quadratic()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Halfspace {
        n: usize,
        d: usize,
        separation: f64,
        data_seed: u64,
        loss: LossSpec,
        reg_weight: f64,
        /// How many successive data seeds may be tried when no saddle is found.
        max_resamples: usize,
    },
    Quadratic {
        eigenvalues: Vec<f64>,
        linear: Vec<f64>,
        noise_sigma: f64,
        noise_direction: Vec<f64>,
    },
    Mlp {
        layer_sizes: Vec<usize>,
        n_points: usize,
        data_seed: u64,
    },
}

impl ProblemSpec {
    /// Builds the problem; `resample` offsets the data seed.
    pub fn build(&self, resample: u64) -> Result<Problem> {
        match self {
            ProblemSpec::Halfspace { n, d, separation, data_seed, loss, reg_weight, .. } => {
                let p = make_gaussian_halfspace(*n, *d, *separation, data_seed.wrapping_add(resample))?
                    .with_loss(loss.build()?)
                    .with_reg_weight(*reg_weight)?;
                Ok(Problem::Halfspace(p))
            }
            ProblemSpec::Quadratic { eigenvalues, linear, noise_sigma, noise_direction } => {
                let d = eigenvalues.len();
                let h = crate::Matrix::from_diagonal(&Vector::from_column_slice(eigenvalues));
                let b = Vector::from_column_slice(linear);
                let q = if *noise_sigma > 0.0 {
                    QuadraticSaddle::with_two_point_noise(h, b, *noise_sigma, &Vector::from_column_slice(noise_direction))?
                } else {
                    QuadraticSaddle::new(h, b)?
                };
                debug_assert_eq!(q.hessian().nrows(), d);
                Ok(Problem::Quadratic(q))
            }
            ProblemSpec::Mlp { layer_sizes, n_points, data_seed } => Ok(Problem::Mlp(TinyMlp::synthetic(
                layer_sizes.clone(),
                *n_points,
                data_seed.wrapping_add(resample),
            )?)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Halfspace { d, .. } => *d,
            ProblemSpec::Quadratic { eigenvalues, .. } => eigenvalues.len(),
            ProblemSpec::Mlp { layer_sizes, .. } => layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum(),
        }
    }

    pub fn max_resamples(&self) -> usize {
        match self {
            ProblemSpec::Halfspace { max_resamples, .. } => *max_resamples,
            ProblemSpec::Mlp { .. } => 0,
            ProblemSpec::Quadratic { .. } => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    Origin,
    /// Saddle search from `search_starts` random points on the sphere of
    /// radius `search_radius`, then a random offset of norm `scale` per seed.
    NearSaddle { scale: f64, search_radius: f64, search_starts: usize, eps_g: f64, max_iters: usize },
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum MethodSpec {
    Gd { eta: f64 },
    Sgd { eta: f64 },
    IsoPgd { eta: f64, r: f64, g_thres: f64, tr: usize },
    CncPgd(PgdParams),
    CncSgd(SgdParams),
}

impl MethodSpec {
    pub fn method(&self) -> Method {
        match self {
            MethodSpec::Gd { .. } => Method::Gd,
            MethodSpec::Sgd { .. } => Method::Sgd,
            MethodSpec::IsoPgd { .. } => Method::IsoPgd,
            MethodSpec::CncPgd(_) => Method::CncPgd,
            MethodSpec::CncSgd(_) => Method::CncSgd,
        }
    }

    /// The small step size `η`, as used by the descent checks.
    pub fn eta(&self) -> f64 {
        match self {
            MethodSpec::Gd { eta } | MethodSpec::Sgd { eta } | MethodSpec::IsoPgd { eta, .. } => *eta,
            MethodSpec::CncPgd(p) => p.eta,
            MethodSpec::CncSgd(p) => p.eta,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureFamily {
    /// Unregularized sigmoid half-spaces, one per dimension in `values`.
    HalfspaceDim,
    /// `[4, width, 3]` networks, one per width in `values`.
    MlpWidth,
    /// Networks with `depth` hidden layers of width 4, one per depth in `values`.
    MlpDepth,
}

impl MeasureFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            MeasureFamily::HalfspaceDim => "halfspace_dim",
            MeasureFamily::MlpWidth => "mlp_width",
            MeasureFamily::MlpDepth => "mlp_depth",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSpec {
    pub family: MeasureFamily,
    pub values: Vec<usize>,
    /// Parameter points per family member.
    pub m: usize,
    /// Data samples per family member.
    pub n: usize,
    pub separation: f64,
    pub data_seed: u64,
    pub iso_draws: usize,
    /// Half-space parameter points are drawn uniformly from this ball.
    pub point_radius: f64,
    /// Standard deviation multiplier for MLP weight draws.
    pub weight_scale: f64,
}

/// A validated, fully resolved experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    pub t_max: usize,
    pub rng_seed: u64,
    pub init: InitSpec,
    pub output_dir: String,
    pub snapshot_thinning: usize,
    pub eig_every: usize,
    pub escape_drop_fraction: f64,
    pub measure: MeasureSpec,
    /// The resolved document without `output_dir`, one line per entry, for
    /// CSV headers.
    pub echo: Vec<String>,
}

impl ExperimentConfig {
    pub fn method_spec(&self, m: Method) -> Option<&MethodSpec> {
        self.methods.iter().find(|s| s.method() == m)
    }

    /// Returns a copy with a different seed list (and updated echo).
    pub fn with_seeds(&self, seeds: Vec<u64>) -> Result<Self> {
        self.with_override(|raw| raw.seeds = Some(seeds))
    }

    pub fn with_output_dir(&self, dir: &str) -> Result<Self> {
        Ok(Self { output_dir: dir.to_string(), ..self.clone() })
    }

    fn with_override(&self, f: impl FnOnce(&mut RawConfig)) -> Result<Self> {
        let mut raw = parse_raw(&self.echo.join("\n"))?;
        f(&mut raw);
        Ok(Self { output_dir: self.output_dir.clone(), ..resolve(raw)? })
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let user = parse_raw(text)?;
    let merged = match &user.preset {
        Some(name) => overlay(preset(name)?, user)?,
        None => user,
    };
    resolve(merged)
}

/// The config a preset name expands to, in resolved form.
pub fn preset_config(name: &str) -> Result<ExperimentConfig> {
    parse_config(&format!("preset = {:?}", name))
}

fn parse_raw(text: &str) -> Result<RawConfig> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
        Error::Parse { line, message: e.message().to_string() }
    })
}

fn preset(name: &str) -> Result<RawConfig> {
    if name != HALFSPACE_PRESET {
        return Err(Error::Validation(vec![format!("preset: unknown preset {name:?}")]));
    }
    let pgd = RawMethod { eta: None, r: Some(0.1), g_thres: Some(0.01), tr: Some(20), derive: None };
    Ok(RawConfig {
        preset: Some(name.to_string()),
        seeds: Some((0..10).collect()),
        methods: Some(["gd", "sgd", "iso_pgd", "cnc_pgd"].map(String::from).to_vec()),
        t_max: Some(2000),
        eta: Some(0.25),
        problem: Some(RawProblem {
            kind: Some("halfspace".into()),
            n: Some(40),
            d: Some(4),
            separation: Some(0.5),
            data_seed: Some(0),
            loss: Some("sigmoid_sharp".into()),
            sharpness: Some(6.0),
            reg_weight: Some(0.01),
            ..Default::default()
        }),
        init: Some(RawInit { mode: Some("near_saddle".into()), scale: Some(1e-4), ..Default::default() }),
        iso_pgd: Some(pgd.clone()),
        cnc_pgd: Some(pgd),
        ..Default::default()
    })
}

/// Deep-merges `top` over `base`.
fn overlay(base: RawConfig, top: RawConfig) -> Result<RawConfig> {
    fn merge(base: &mut toml::Table, top: toml::Table) {
        for (k, v) in top {
            match (base.get_mut(&k), v) {
                (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
                (_, v) => {
                    base.insert(k, v);
                }
            }
        }
    }
    let to_table = |r: &RawConfig| {
        toml::Table::try_from(r).map_err(|e| Error::Validation(vec![format!("config could not be merged: {e}")]))
    };
    let mut b = to_table(&base)?;
    merge(&mut b, to_table(&top)?);
    b.try_into().map_err(|e: toml::de::Error| Error::Parse { line: 0, message: e.message().to_string() })
}

struct Checker {
    errors: Vec<String>,
}

impl Checker {
    fn positive(&mut self, field: &str, x: f64) {
        if !(x > 0.0 && x.is_finite()) {
            self.errors.push(format!("{field}: must be positive, got {x}"));
        }
    }
    fn non_negative(&mut self, field: &str, x: f64) {
        if !(x >= 0.0 && x.is_finite()) {
            self.errors.push(format!("{field}: must be non-negative, got {x}"));
        }
    }
    fn nonzero(&mut self, field: &str, x: usize) {
        if x == 0 {
            self.errors.push(format!("{field}: must be at least 1"));
        }
    }
    fn fail(&mut self, msg: String) {
        self.errors.push(msg);
    }
}

fn fill_problem(p: &mut RawProblem, c: &mut Checker) {
    let kind = p.kind.get_or_insert_with(|| "halfspace".into()).clone();
    let present: Vec<(&str, bool)> = vec![
        ("n", p.n.is_some()),
        ("d", p.d.is_some()),
        ("separation", p.separation.is_some()),
        ("loss", p.loss.is_some()),
        ("sharpness", p.sharpness.is_some()),
        ("reg_weight", p.reg_weight.is_some()),
        ("max_resamples", p.max_resamples.is_some()),
        ("eigenvalues", p.eigenvalues.is_some()),
        ("linear", p.linear.is_some()),
        ("noise_sigma", p.noise_sigma.is_some()),
        ("noise_direction", p.noise_direction.is_some()),
        ("layer_sizes", p.layer_sizes.is_some()),
        ("n_points", p.n_points.is_some()),
    ];
    let allowed: &[&str] = match kind.as_str() {
        "halfspace" => &["n", "d", "separation", "loss", "sharpness", "reg_weight", "max_resamples"],
        "quadratic" => &["eigenvalues", "linear", "noise_sigma", "noise_direction"],
        "mlp" => &["layer_sizes", "n_points"],
        other => {
            c.fail(format!("problem.kind: unknown kind {other:?} (expected halfspace, quadratic or mlp)"));
            return;
        }
    };
    for (name, set) in present {
        if set && !allowed.contains(&name) {
            c.fail(format!("problem.{name}: not a parameter of kind {kind:?}"));
        }
    }
    match kind.as_str() {
        "halfspace" => {
            p.n.get_or_insert(40);
            p.d.get_or_insert(4);
            p.separation.get_or_insert(0.5);
            p.data_seed.get_or_insert(0);
            let loss = p.loss.get_or_insert_with(|| "sigmoid_sharp".into()).clone();
            if loss == "sigmoid_sharp" {
                p.sharpness.get_or_insert(6.0);
            } else if p.sharpness.is_some() {
                c.fail(format!("problem.sharpness: only used with loss \"sigmoid_sharp\", not {loss:?}"));
            }
            p.reg_weight.get_or_insert(0.01);
            p.max_resamples.get_or_insert(20);
        }
        "quadratic" => {
            let d = p.eigenvalues.get_or_insert_with(|| vec![1.0, -1.0]).len();
            p.linear.get_or_insert_with(|| vec![0.0; d]);
            p.noise_sigma.get_or_insert(0.0);
            p.noise_direction.get_or_insert_with(|| {
                let mut e = vec![0.0; d];
                if d > 0 {
                    e[d - 1] = 1.0;
                }
                e
            });
            if p.data_seed.is_some() {
                c.fail("problem.data_seed: not a parameter of kind \"quadratic\"".into());
            }
        }
        _ => {
            p.layer_sizes.get_or_insert_with(|| vec![4, 4, 3]);
            p.n_points.get_or_insert(20);
            p.data_seed.get_or_insert(0);
        }
    }
}

fn fill_init(i: &mut RawInit) {
    let mode = i.mode.get_or_insert_with(|| "near_saddle".into()).clone();
    if mode == "near_saddle" {
        i.scale.get_or_insert(1e-4);
        i.search_radius.get_or_insert(1.0);
        i.search_starts.get_or_insert(32);
        i.eps_g.get_or_insert(1e-10);
        i.max_iters.get_or_insert(5_000);
    }
}

fn fill_method(m: Method, raw: &mut RawMethod, eta: f64) {
    if raw.derive.is_some() {
        return;
    }
    match m {
        Method::Gd | Method::Sgd => {
            raw.eta.get_or_insert(eta);
        }
        Method::IsoPgd | Method::CncPgd => {
            raw.eta.get_or_insert(eta);
            raw.r.get_or_insert(0.1);
            raw.g_thres.get_or_insert(0.01);
            raw.tr.get_or_insert(20);
        }
        Method::CncSgd => {
            let e = *raw.eta.get_or_insert(eta);
            raw.r.get_or_insert(2.0 * e);
            raw.tr.get_or_insert(20);
        }
    }
}

fn method_table(raw: &mut RawConfig, m: Method) -> &mut Option<RawMethod> {
    match m {
        Method::Gd => &mut raw.gd,
        Method::Sgd => &mut raw.sgd,
        Method::IsoPgd => &mut raw.iso_pgd,
        Method::CncPgd => &mut raw.cnc_pgd,
        Method::CncSgd => &mut raw.cnc_sgd,
    }
}

fn fill_measure(m: &mut RawMeasure) {
    m.family.get_or_insert_with(|| "halfspace_dim".into());
    m.values.get_or_insert_with(|| vec![8, 16, 32, 64]);
    m.m.get_or_insert(4);
    m.n.get_or_insert(50);
    m.separation.get_or_insert(0.5);
    m.data_seed.get_or_insert(0);
    m.iso_draws.get_or_insert(100_000);
    m.point_radius.get_or_insert(3.0);
    m.weight_scale.get_or_insert(1.0);
}

fn resolve(mut raw: RawConfig) -> Result<ExperimentConfig> {
    let mut c = Checker { errors: Vec::new() };

    match &raw.seeds {
        None => c.fail("seeds: at least one seed is required".into()),
        Some(s) if s.is_empty() => c.fail("seeds: at least one seed is required".into()),
        _ => {}
    }
    let method_names = raw.methods.clone().unwrap_or_default();
    if method_names.is_empty() {
        c.fail("methods: at least one method is required".into());
    }
    let mut methods = Vec::new();
    for name in &method_names {
        match name.parse::<Method>() {
            Ok(m) if methods.contains(&m) => c.fail(format!("methods: {name:?} listed twice")),
            Ok(m) => methods.push(m),
            Err(_) => c.fail(format!("methods: unknown method {name:?}")),
        }
    }
    raw.t_max.get_or_insert(1000);
    let eta = *raw.eta.get_or_insert(0.25);
    raw.rng_seed.get_or_insert(0);
    raw.output_dir.get_or_insert_with(|| "out".into());
    let thin = *raw.snapshot_thinning.get_or_insert(1);
    let eig_every = *raw.eig_every.get_or_insert(thin);
    raw.escape_drop_fraction.get_or_insert(0.05);
    c.positive("eta", eta);
    c.nonzero("snapshot_thinning", thin);
    c.nonzero("eig_every", eig_every);
    if thin > 0 && !eig_every.is_multiple_of(thin) {
        c.fail(format!("eig_every: must be a multiple of snapshot_thinning ({thin}), got {eig_every}"));
    }
    let drop = raw.escape_drop_fraction.unwrap_or_default();
    if !(drop > 0.0 && drop < 1.0) {
        c.fail(format!("escape_drop_fraction: must lie in (0, 1), got {drop}"));
    }

    fill_problem(raw.problem.get_or_insert_with(Default::default), &mut c);
    fill_init(raw.init.get_or_insert_with(Default::default));
    fill_measure(raw.measure.get_or_insert_with(Default::default));
    for m in Method::ALL {
        let slot = method_table(&mut raw, m);
        if methods.contains(&m) {
            fill_method(m, slot.get_or_insert_with(Default::default), eta);
        } else if slot.is_some() {
            c.fail(format!("{}: parameters given for a method that is not in `methods`", m.tag()));
        }
    }

    if !c.errors.is_empty() {
        return Err(Error::Validation(c.errors));
    }
    let t_max = raw.t_max.unwrap_or_default();
    let problem = build_problem_spec(raw.problem.as_ref().expect("filled"), &mut c);
    let init = build_init(raw.init.as_ref().expect("filled"), problem.as_ref().map(|p| p.dim()), &mut c);
    let measure = build_measure(raw.measure.as_ref().expect("filled"), &mut c);
    let mut specs = Vec::new();
    for &m in &methods {
        let table = method_table(&mut raw, m).clone().expect("filled");
        if let Some(s) = build_method(m, &table, t_max, &mut c) {
            specs.push(s);
        }
    }
    if !c.errors.is_empty() {
        return Err(Error::Validation(c.errors));
    }

    let echoed = RawConfig { output_dir: None, ..raw.clone() };
    let echo = toml::to_string(&echoed)
        .map_err(|e| Error::Validation(vec![format!("config could not be serialized: {e}")]))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    Ok(ExperimentConfig {
        problem: problem.expect("validated"),
        methods: specs,
        seeds: raw.seeds.clone().unwrap_or_default(),
        t_max,
        rng_seed: raw.rng_seed.unwrap_or_default(),
        init: init.expect("validated"),
        output_dir: raw.output_dir.clone().unwrap_or_default(),
        snapshot_thinning: thin,
        eig_every,
        escape_drop_fraction: drop,
        measure: measure.expect("validated"),
        echo,
    })
}

fn build_problem_spec(p: &RawProblem, c: &mut Checker) -> Option<ProblemSpec> {
    match p.kind.as_deref() {
        Some("halfspace") => {
            let (n, d) = (p.n.unwrap_or_default(), p.d.unwrap_or_default());
            if n == 0 || !n.is_multiple_of(2) {
                c.fail(format!("problem.n: must be even and positive, got {n}"));
            }
            c.nonzero("problem.d", d);
            let separation = p.separation.unwrap_or_default();
            c.non_negative("problem.separation", separation);
            let reg_weight = p.reg_weight.unwrap_or_default();
            c.non_negative("problem.reg_weight", reg_weight);
            let loss = match p.loss.as_deref() {
                Some("sigmoid") => LossSpec::Sigmoid,
                Some("sigmoid_sharp") => {
                    let k = p.sharpness.unwrap_or_default();
                    c.positive("problem.sharpness", k);
                    LossSpec::SigmoidSharp(k)
                }
                Some("linear") => LossSpec::Linear,
                Some("quadratic") => LossSpec::Quadratic,
                other => {
                    c.fail(format!(
                        "problem.loss: unknown loss {other:?} (expected sigmoid, sigmoid_sharp, linear or quadratic)"
                    ));
                    return None;
                }
            };
            Some(ProblemSpec::Halfspace {
                n,
                d,
                separation,
                data_seed: p.data_seed.unwrap_or_default(),
                loss,
                reg_weight,
                max_resamples: p.max_resamples.unwrap_or_default(),
            })
        }
        Some("quadratic") => {
            let eigenvalues = p.eigenvalues.clone().unwrap_or_default();
            let linear = p.linear.clone().unwrap_or_default();
            let noise_direction = p.noise_direction.clone().unwrap_or_default();
            if eigenvalues.is_empty() {
                c.fail("problem.eigenvalues: at least one eigenvalue is required".into());
            }
            if eigenvalues.iter().any(|x| !x.is_finite()) {
                c.fail("problem.eigenvalues: values must be finite".into());
            }
            if linear.len() != eigenvalues.len() {
                c.fail(format!("problem.linear: expected {} entries, got {}", eigenvalues.len(), linear.len()));
            }
            if noise_direction.len() != eigenvalues.len() {
                c.fail(format!(
                    "problem.noise_direction: expected {} entries, got {}",
                    eigenvalues.len(),
                    noise_direction.len()
                ));
            }
            let noise_sigma = p.noise_sigma.unwrap_or_default();
            c.non_negative("problem.noise_sigma", noise_sigma);
            Some(ProblemSpec::Quadratic { eigenvalues, linear, noise_sigma, noise_direction })
        }
        _ => {
            let layer_sizes = p.layer_sizes.clone().unwrap_or_default();
            if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
                c.fail(format!("problem.layer_sizes: need at least two positive sizes, got {layer_sizes:?}"));
            }
            let n_points = p.n_points.unwrap_or_default();
            c.nonzero("problem.n_points", n_points);
            Some(ProblemSpec::Mlp { layer_sizes, n_points, data_seed: p.data_seed.unwrap_or_default() })
        }
    }
}

fn build_init(i: &RawInit, dim: Option<usize>, c: &mut Checker) -> Option<InitSpec> {
    let mode = i.mode.as_deref().unwrap_or_default();
    let extras = |c: &mut Checker, allowed: &[&str]| {
        let fields = [
            ("scale", i.scale.is_some()),
            ("search_radius", i.search_radius.is_some()),
            ("search_starts", i.search_starts.is_some()),
            ("eps_g", i.eps_g.is_some()),
            ("max_iters", i.max_iters.is_some()),
            ("point", i.point.is_some()),
        ];
        for (name, set) in fields {
            if set && !allowed.contains(&name) {
                c.fail(format!("init.{name}: not used by mode {mode:?}"));
            }
        }
    };
    match mode {
        "origin" => {
            extras(c, &[]);
            Some(InitSpec::Origin)
        }
        "near_saddle" => {
            extras(c, &["scale", "search_radius", "search_starts", "eps_g", "max_iters"]);
            let scale = i.scale.unwrap_or_default();
            c.non_negative("init.scale", scale);
            let search_radius = i.search_radius.unwrap_or_default();
            c.non_negative("init.search_radius", search_radius);
            let search_starts = i.search_starts.unwrap_or_default();
            c.nonzero("init.search_starts", search_starts);
            let eps_g = i.eps_g.unwrap_or_default();
            c.positive("init.eps_g", eps_g);
            Some(InitSpec::NearSaddle {
                scale,
                search_radius,
                search_starts,
                eps_g,
                max_iters: i.max_iters.unwrap_or_default(),
            })
        }
        "explicit" => {
            extras(c, &["point"]);
            let point = match &i.point {
                Some(p) => p.clone(),
                None => {
                    c.fail("init.point: required when mode = \"explicit\"".into());
                    return None;
                }
            };
            if let Some(d) = dim {
                if point.len() != d {
                    c.fail(format!("init.point: expected {d} entries, got {}", point.len()));
                }
            }
            if point.iter().any(|x| !x.is_finite()) {
                c.fail("init.point: values must be finite".into());
            }
            Some(InitSpec::Explicit(point))
        }
        other => {
            c.fail(format!("init.mode: unknown mode {other:?} (expected origin, near_saddle or explicit)"));
            None
        }
    }
}

fn build_measure(m: &RawMeasure, c: &mut Checker) -> Option<MeasureSpec> {
    let family = match m.family.as_deref() {
        Some("halfspace_dim") => MeasureFamily::HalfspaceDim,
        Some("mlp_width") => MeasureFamily::MlpWidth,
        Some("mlp_depth") => MeasureFamily::MlpDepth,
        other => {
            c.fail(format!("measure.family: unknown family {other:?}"));
            return None;
        }
    };
    let values = m.values.clone().unwrap_or_default();
    if values.is_empty() || values.contains(&0) {
        c.fail(format!("measure.values: need at least one positive value, got {values:?}"));
    }
    let n = m.n.unwrap_or_default();
    if family == MeasureFamily::HalfspaceDim && (n == 0 || !n.is_multiple_of(2)) {
        c.fail(format!("measure.n: must be even and positive, got {n}"));
    }
    c.nonzero("measure.n", n);
    c.nonzero("measure.m", m.m.unwrap_or_default());
    c.nonzero("measure.iso_draws", m.iso_draws.unwrap_or_default());
    c.non_negative("measure.separation", m.separation.unwrap_or_default());
    c.non_negative("measure.point_radius", m.point_radius.unwrap_or_default());
    c.positive("measure.weight_scale", m.weight_scale.unwrap_or_default());
    Some(MeasureSpec {
        family,
        values,
        m: m.m.unwrap_or_default(),
        n,
        separation: m.separation.unwrap_or_default(),
        data_seed: m.data_seed.unwrap_or_default(),
        iso_draws: m.iso_draws.unwrap_or_default(),
        point_radius: m.point_radius.unwrap_or_default(),
        weight_scale: m.weight_scale.unwrap_or_default(),
    })
}

fn build_method(m: Method, raw: &RawMethod, t_max: usize, c: &mut Checker) -> Option<MethodSpec> {
    let tag = m.tag();
    if let Some(d) = &raw.derive {
        if raw.eta.is_some() || raw.r.is_some() || raw.g_thres.is_some() || raw.tr.is_some() {
            c.fail(format!("{tag}.derive: cannot be combined with explicit eta, r, g_thres or tr"));
            return None;
        }
        let consts = SmoothnessConstants {
            l_smooth: d.l_smooth,
            ell: d.ell,
            rho: d.rho,
            gamma: d.gamma,
            delta: d.delta,
            f_gap: d.f_gap,
        };
        let derived = match m {
            Method::CncPgd => derive_pgd_params(&consts, d.eps, PgdConstants::default()).map(|dv| {
                let mut p = dv.params;
                p.t_max = t_max;
                MethodSpec::CncPgd(p)
            }),
            Method::CncSgd => derive_sgd_params(&consts, d.eps, SgdConstants::default()).map(|dv| {
                let mut p = dv.params;
                p.t_max = t_max;
                MethodSpec::CncSgd(p)
            }),
            _ => {
                c.fail(format!("{tag}.derive: only cnc_pgd and cnc_sgd support derived parameters"));
                return None;
            }
        };
        return match derived {
            Ok(s) => Some(s),
            Err(e) => {
                c.fail(format!("{tag}.derive: {e}"));
                None
            }
        };
    }
    let eta = raw.eta.unwrap_or_default();
    c.positive(&format!("{tag}.eta"), eta);
    let allowed: &[bool] = match m {
        Method::Gd | Method::Sgd => &[raw.r.is_none(), raw.g_thres.is_none(), raw.tr.is_none()],
        Method::CncSgd => &[raw.g_thres.is_none()],
        _ => &[],
    };
    if allowed.iter().any(|ok| !ok) {
        c.fail(format!("{tag}: contains parameters the method does not use"));
    }
    match m {
        Method::Gd => Some(MethodSpec::Gd { eta }),
        Method::Sgd => Some(MethodSpec::Sgd { eta }),
        Method::IsoPgd | Method::CncPgd => {
            let r = raw.r.unwrap_or_default();
            let g_thres = raw.g_thres.unwrap_or_default();
            let tr = raw.tr.unwrap_or_default();
            c.non_negative(&format!("{tag}.r"), r);
            c.non_negative(&format!("{tag}.g_thres"), g_thres);
            c.nonzero(&format!("{tag}.tr"), tr);
            if m == Method::IsoPgd {
                return Some(MethodSpec::IsoPgd { eta, r, g_thres, tr });
            }
            match PgdParams::practical(eta, r, g_thres, tr.max(1), t_max) {
                Ok(p) => Some(MethodSpec::CncPgd(p)),
                Err(e) => {
                    c.fail(format!("{tag}: {e}"));
                    None
                }
            }
        }
        Method::CncSgd => {
            let r = raw.r.unwrap_or_default();
            let tr = raw.tr.unwrap_or_default();
            c.positive(&format!("{tag}.r"), r);
            c.nonzero(&format!("{tag}.tr"), tr);
            match SgdParams::new(r, eta, tr.max(1), t_max) {
                Ok(p) => Some(MethodSpec::CncSgd(p)),
                Err(e) => {
                    c.fail(format!("{tag}: {e}"));
                    None
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config("seeds = [3]\nmethods = [\"gd\"]\n").unwrap();
        assert_eq!(cfg.seeds, vec![3]);
        assert_eq!(cfg.methods, vec![MethodSpec::Gd { eta: 0.25 }]);
        assert_eq!(cfg.t_max, 1000);
        assert_eq!(cfg.snapshot_thinning, 1);
        assert_eq!(cfg.escape_drop_fraction, 0.05);
        assert!(matches!(cfg.problem, ProblemSpec::Halfspace { n: 40, d: 4, .. }));
        assert!(matches!(cfg.init, InitSpec::NearSaddle { .. }));
    }

    #[test]
    fn negative_step_names_the_field() {
        let err = parse_config("seeds = [0]\nmethods = [\"gd\"]\n[gd]\neta = -0.1\n").unwrap_err();
        match err {
            Error::Validation(v) => assert!(v.iter().any(|m| m.starts_with("gd.eta")), "{v:?}"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn all_violations_are_listed() {
        let err = parse_config("seeds = []\nmethods = []\neta = 0.0\n").unwrap_err();
        match err {
            Error::Validation(v) => {
                assert!(v.iter().any(|m| m.starts_with("seeds")));
                assert!(v.iter().any(|m| m.starts_with("methods")));
                assert!(v.iter().any(|m| m.starts_with("eta")));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn halfspace_preset_values() {
        let cfg = preset_config(HALFSPACE_PRESET).unwrap();
        assert!(matches!(cfg.problem, ProblemSpec::Halfspace { n: 40, d: 4, .. }));
        assert_eq!(cfg.seeds.len(), 10);
        let ms: Vec<Method> = cfg.methods.iter().map(|m| m.method()).collect();
        assert_eq!(ms, vec![Method::Gd, Method::Sgd, Method::IsoPgd, Method::CncPgd]);
        for m in &cfg.methods {
            assert_eq!(m.eta(), 0.25);
        }
        match cfg.method_spec(Method::CncPgd).unwrap() {
            MethodSpec::CncPgd(p) => {
                assert_eq!(p.r, 0.1);
                assert_eq!(p.g_thres, 0.01);
            }
            _ => unreachable!(),
        }
        assert!(matches!(cfg.method_spec(Method::IsoPgd), Some(MethodSpec::IsoPgd { r, g_thres, .. }) if *r == 0.1 && *g_thres == 0.01));
    }

    #[test]
    fn document_overrides_preset() {
        let cfg = parse_config("preset = \"halfspaces-appendix-e\"\nt_max = 50\n[problem]\nseparation = 0.7\n").unwrap();
        assert_eq!(cfg.t_max, 50);
        assert!(matches!(cfg.problem, ProblemSpec::Halfspace { separation, n: 40, .. } if separation == 0.7));
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let err = parse_config("seeds = [0]\nmethods = [\"gd\"]\n\nbogus = 1\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("bogus"), "{message}");
            }
            e => panic!("unexpected {e:?}"),
        }
        let err = parse_config("seeds = [0]\n[problem]\nsepration = 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn unknown_preset_and_method() {
        assert!(matches!(parse_config("preset = \"nope\""), Err(Error::Validation(_))));
        assert!(matches!(parse_config("seeds=[0]\nmethods=[\"adam\"]"), Err(Error::Validation(_))));
    }

    #[test]
    fn parameters_for_wrong_kind_or_method_are_rejected() {
        let e = parse_config("seeds=[0]\nmethods=[\"gd\"]\n[problem]\nkind=\"quadratic\"\nn=10\n").unwrap_err();
        assert!(matches!(e, Error::Validation(v) if v.iter().any(|m| m.starts_with("problem.n"))));
        let e = parse_config("seeds=[0]\nmethods=[\"gd\"]\n[gd]\nr=0.1\n").unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
        let e = parse_config("seeds=[0]\nmethods=[\"gd\"]\n[sgd]\neta=0.1\n").unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
    }

    #[test]
    fn cnc_sgd_step_order_is_validated() {
        let e = parse_config("seeds=[0]\nmethods=[\"cnc_sgd\"]\n[cnc_sgd]\neta=0.2\nr=0.1\n").unwrap_err();
        assert!(matches!(e, Error::Validation(v) if v.iter().any(|m| m.starts_with("cnc_sgd"))));
    }

    #[test]
    fn derived_parameters() {
        let doc = "seeds=[0]\nmethods=[\"cnc_pgd\"]\nt_max=7\n[cnc_pgd.derive]\neps=0.5\nl_smooth=1.0\nell=1.0\nrho=1.0\ngamma=1.0\ndelta=0.5\nf_gap=1.0\n";
        let cfg = parse_config(doc).unwrap();
        match &cfg.methods[0] {
            MethodSpec::CncPgd(p) => {
                assert_eq!(p.t_max, 7);
                assert_eq!(p.eta, 1.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn echo_reparses_to_the_same_config() {
        let cfg = preset_config(HALFSPACE_PRESET).unwrap();
        let again = parse_config(&cfg.echo.join("\n")).unwrap();
        assert_eq!(cfg, again);
        let other = cfg.with_seeds(vec![5, 6]).unwrap();
        assert_eq!(other.seeds, vec![5, 6]);
        assert_eq!(other.methods, cfg.methods);
    }

    #[test]
    fn quadratic_and_mlp_kinds() {
        let cfg = parse_config(
            "seeds=[0]\nmethods=[\"gd\"]\n[problem]\nkind=\"quadratic\"\neigenvalues=[1.0,-0.5]\nnoise_sigma=0.1\n[init]\nmode=\"origin\"\n",
        )
        .unwrap();
        assert_eq!(cfg.problem.dim(), 2);
        cfg.problem.build(0).unwrap();
        let cfg = parse_config("seeds=[0]\nmethods=[\"sgd\"]\n[problem]\nkind=\"mlp\"\n").unwrap();
        assert_eq!(cfg.problem.dim(), 5 * 4 + 5 * 3);
        let explicit = parse_config("seeds=[0]\nmethods=[\"gd\"]\n[init]\nmode=\"explicit\"\npoint=[1.0]\n");
        assert!(matches!(explicit, Err(Error::Validation(_))));
    }
}
