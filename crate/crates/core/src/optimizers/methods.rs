use super::params::{PgdParams, SgdParams};
use super::trajectory::{pick_uniform_iterate, Method, RunOptions, Trajectory};
use crate::problems::{Objective, StochasticObjective};
use crate::rngs::{derive_seed, rng_from, tag, Rng};
use crate::{Error, Result, Vector};
use rand_distr::{Distribution, StandardNormal};

const DIVERGENCE_NORM: f64 = 1e12;

fn uniform_in_ball(d: usize, rng: &mut Rng) -> Vector {
    let g = Vector::from_fn(d, |_, _| StandardNormal.sample(rng));
    let radius = (crate::problems::uniform01(rng)).powf(1.0 / d as f64);
    let norm = g.norm();
    if norm == 0.0 {
        return Vector::zeros(d);
    }
    g * (radius / norm)
}

/// How the next iterate is produced from `w_t`.
enum Rule {
    Gd { eta: f64 },
    Sgd { eta: f64 },
    Iso { eta: f64, r: f64, g_thres: f64, tr: usize },
    CncPgd(PgdParams),
    CncSgd(SgdParams),
}

impl Rule {
    fn method(&self) -> Method {
        match self {
            Rule::Gd { .. } => Method::Gd,
            Rule::Sgd { .. } => Method::Sgd,
            Rule::Iso { .. } => Method::IsoPgd,
            Rule::CncPgd(_) => Method::CncPgd,
            Rule::CncSgd(_) => Method::CncSgd,
        }
    }

    fn params(&self) -> Vec<(String, String)> {
        let kv = |k: &str, v: String| (k.to_string(), v);
        match *self {
            Rule::Gd { eta } | Rule::Sgd { eta } => vec![kv("eta", eta.to_string())],
            Rule::Iso { eta, r, g_thres, tr } => vec![
                kv("eta", eta.to_string()),
                kv("r", r.to_string()),
                kv("g_thres", g_thres.to_string()),
                kv("tr", tr.to_string()),
            ],
            Rule::CncPgd(p) => vec![
                kv("eta", p.eta.to_string()),
                kv("r", p.r.to_string()),
                kv("g_thres", p.g_thres.to_string()),
                kv("f_thres", p.f_thres.to_string()),
                kv("tr", p.tr.to_string()),
            ],
            Rule::CncSgd(p) => {
                vec![kv("eta", p.eta.to_string()), kv("r", p.r.to_string()), kv("tr", p.tr.to_string())]
            }
        }
    }
}

/// What happened at one step.
struct Step {
    next: Vector,
    step_size: f64,
    perturbed: bool,
    noise: Option<Vector>,
}

fn check_finite(w: &Vector, f: f64, t: usize) -> Result<()> {
    if !f.is_finite() || w.iter().any(|x| !x.is_finite()) || w.norm() > DIVERGENCE_NORM {
        return Err(Error::NonFiniteIterate { t });
    }
    Ok(())
}

struct Engine<'a, O: ?Sized> {
    obj: &'a O,
    opts: RunOptions,
}

impl<'a, O: StochasticObjective + ?Sized> Engine<'a, O> {
    fn stochastic_step(&self, w: &Vector, g: &Vector, size: f64, rng: &mut Rng, perturbed: bool) -> Result<Step> {
        let i = self.obj.draw_index(rng);
        let gz = self.obj.sample_grad(w, i)?;
        let next = w - &gz * size;
        let noise = self.opts.log_noise.then(|| g - &gz);
        Ok(Step { next, step_size: size, perturbed, noise })
    }

    fn full_step(&self, w: &Vector, g: &Vector, size: f64) -> Step {
        let noise = self.opts.log_noise.then(|| Vector::zeros(w.len()));
        Step { next: w - g * size, step_size: size, perturbed: false, noise }
    }

    fn run(&self, w0: &Vector, rule: Rule, t_max: usize, seed: u64) -> Result<Trajectory> {
        let d = self.obj.dim();
        if w0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: w0.len() });
        }
        if self.opts.snapshot_every == 0 {
            return Err(Error::InvalidParameter("snapshot_every must be at least 1".into()));
        }
        let method = rule.method();
        let stochastic = method.is_stochastic();
        let mut traj = Trajectory::new(method, stochastic.then_some(seed), rule.params());
        if self.opts.log_noise {
            traj.noise = Some(Vec::with_capacity(t_max));
        }
        let mut rng = rng_from(seed);
        let mut w = w0.clone();
        let mut f = self.obj.value(&w)?;
        check_finite(&w, f, 0)?;
        let mut g = self.obj.grad(&w)?;
        let mut last_noise: Option<usize> = None;

        for t in 0..=t_max {
            traj.f_values.push(f);
            traj.grad_norms.push(g.norm());
            if t % self.opts.snapshot_every == 0 || t == t_max {
                traj.iterates.push((t, w.clone()));
            }
            if t == t_max {
                break;
            }
            let gn2 = g.norm_squared();
            let window_open = |tr: usize| last_noise.is_none_or(|s| t - s >= tr);
            let step = match rule {
                Rule::Gd { eta } => self.full_step(&w, &g, eta),
                Rule::Sgd { eta } => self.stochastic_step(&w, &g, eta, &mut rng, false)?,
                Rule::Iso { eta, r, g_thres, tr } => {
                    let mut s = self.full_step(&w, &g, eta);
                    if g_thres > 0.0 && r > 0.0 && gn2 <= g_thres && window_open(tr) {
                        s.next += uniform_in_ball(d, &mut rng) * r;
                        s.perturbed = true;
                    }
                    s
                }
                Rule::CncPgd(p) => {
                    if p.g_thres > 0.0 && p.r > 0.0 && gn2 <= p.g_thres && window_open(p.tr) {
                        self.stochastic_step(&w, &g, p.r, &mut rng, true)?
                    } else {
                        self.full_step(&w, &g, p.eta)
                    }
                }
                Rule::CncSgd(p) => {
                    if t % p.tr == 0 {
                        self.stochastic_step(&w, &g, p.r, &mut rng, true)?
                    } else {
                        self.stochastic_step(&w, &g, p.eta, &mut rng, false)?
                    }
                }
            };
            if step.perturbed {
                traj.perturbation_steps.push(t);
                last_noise = Some(t);
            }
            traj.step_sizes.push(step.step_size);
            if let (Some(log), Some(n)) = (traj.noise.as_mut(), step.noise) {
                log.push(n);
            }
            w = step.next;
            f = self.obj.value(&w)?;
            check_finite(&w, f, t + 1)?;
            g = self.obj.grad(&w)?;
        }

        traj.candidates = match method {
            Method::CncSgd => traj.perturbation_steps.clone(),
            _ => (0..t_max).collect(),
        };
        if matches!(method, Method::CncPgd | Method::CncSgd) {
            traj.picked = pick_uniform_iterate(&traj, derive_seed(&[seed, tag("pick")])).ok();
        }
        Ok(traj)
    }
}

/// A full-gradient-only objective viewed as a one-sample stochastic objective.
struct Deterministic<'a, O: ?Sized>(&'a O);

impl<O: Objective + ?Sized> Objective for Deterministic<'_, O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, w: &Vector) -> Result<f64> {
        self.0.value(w)
    }
    fn grad(&self, w: &Vector) -> Result<Vector> {
        self.0.grad(w)
    }
}

impl<O: Objective + ?Sized> StochasticObjective for Deterministic<'_, O> {
    fn n_samples(&self) -> usize {
        1
    }
    fn sample_grad(&self, w: &Vector, _index: usize) -> Result<Vector> {
        self.0.grad(w)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// Gradient descent `w ← w − η∇f(w)` for `t_max` steps.
pub fn run_gd<O: Objective + ?Sized>(obj: &O, w0: &Vector, eta: f64, t_max: usize) -> Result<Trajectory> {
    run_gd_with(obj, w0, eta, t_max, RunOptions::default())
}

pub fn run_gd_with<O: Objective + ?Sized>(
    obj: &O,
    w0: &Vector,
    eta: f64,
    t_max: usize,
    opts: RunOptions,
) -> Result<Trajectory> {
    positive("eta", eta)?;
    Engine { obj: &Deterministic(obj), opts }.run(w0, Rule::Gd { eta }, t_max, 0)
}

/// Single-sample SGD `w ← w − η∇f_z(w)`.
pub fn run_sgd<O: StochasticObjective + ?Sized>(
    obj: &O,
    w0: &Vector,
    eta: f64,
    t_max: usize,
    seed: u64,
) -> Result<Trajectory> {
    run_sgd_with(obj, w0, eta, t_max, seed, RunOptions::default())
}

pub fn run_sgd_with<O: StochasticObjective + ?Sized>(
    obj: &O,
    w0: &Vector,
    eta: f64,
    t_max: usize,
    seed: u64,
    opts: RunOptions,
) -> Result<Trajectory> {
    positive("eta", eta)?;
    Engine { obj, opts }.run(w0, Rule::Sgd { eta }, t_max, seed)
}

/// Gradient descent with isotropic perturbations `r·ζ`, `ζ` uniform in the unit
/// ball, added when `‖∇f‖² ≤ g_thres` and at least `tr` steps have passed since
/// the previous perturbation. A zero `g_thres` or `r_radius` gives plain GD.
#[allow(clippy::too_many_arguments)]
pub fn run_iso_pgd<O: Objective + ?Sized>(
    obj: &O,
    w0: &Vector,
    eta: f64,
    r_radius: f64,
    g_thres: f64,
    tr: usize,
    t_max: usize,
    seed: u64,
) -> Result<Trajectory> {
    run_iso_pgd_with(obj, w0, eta, r_radius, g_thres, tr, t_max, seed, RunOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn run_iso_pgd_with<O: Objective + ?Sized>(
    obj: &O,
    w0: &Vector,
    eta: f64,
    r_radius: f64,
    g_thres: f64,
    tr: usize,
    t_max: usize,
    seed: u64,
    opts: RunOptions,
) -> Result<Trajectory> {
    positive("eta", eta)?;
    if r_radius < 0.0 || g_thres < 0.0 || tr == 0 {
        return Err(Error::InvalidParameter("r_radius and g_thres must be non-negative, tr >= 1".into()));
    }
    Engine { obj: &Deterministic(obj), opts }.run(w0, Rule::Iso { eta, r: r_radius, g_thres, tr }, t_max, seed)
}

/// Gradient descent that replaces a step by one stochastic-gradient step of
/// size `r` whenever the squared full-gradient norm is at most `g_thres` and at
/// least `tr` steps have passed since the last such step.
pub fn run_cnc_pgd<O: StochasticObjective + ?Sized>(
    obj: &O,
    w0: &Vector,
    params: &PgdParams,
    seed: u64,
) -> Result<Trajectory> {
    run_cnc_pgd_with(obj, w0, params, seed, RunOptions::default())
}

pub fn run_cnc_pgd_with<O: StochasticObjective + ?Sized>(
    obj: &O,
    w0: &Vector,
    params: &PgdParams,
    seed: u64,
    opts: RunOptions,
) -> Result<Trajectory> {
    params.validate()?;
    Engine { obj, opts }.run(w0, Rule::CncPgd(*params), params.t_max, seed)
}

/// SGD whose step size is `r` at every `t ≡ 0 (mod tr)` and `η` otherwise.
pub fn run_cnc_sgd<O: StochasticObjective + ?Sized>(
    obj: &O,
    w0: &Vector,
    params: &SgdParams,
    seed: u64,
) -> Result<Trajectory> {
    run_cnc_sgd_with(obj, w0, params, seed, RunOptions::default())
}

pub fn run_cnc_sgd_with<O: StochasticObjective + ?Sized>(
    obj: &O,
    w0: &Vector,
    params: &SgdParams,
    seed: u64,
    opts: RunOptions,
) -> Result<Trajectory> {
    params.validate()?;
    Engine { obj, opts }.run(w0, Rule::CncSgd(*params), params.t_max, seed)
}
