use crate::csvfmt::{comment_block, fmt_f64, row};
use crate::exec::Execution;
use crate::problems::{HalfspaceProblem, Objective, StochasticObjective};
use crate::rngs::rng_stream;
use crate::spectrum::{hessian_spectrum, sym_eig, SpectrumReport};
use crate::{Error, Result, Vector};
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;

/// Second moments of stochastic gradients projected on one Hessian eigenvector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CncRecord {
    pub k: usize,
    pub lambda: f64,
    /// `E_z[(∇f_z(w)ᵀ v_k)²]` with raw gradients.
    pub mu: f64,
    /// The same moment with every stochastic gradient scaled to unit norm.
    pub mu_normalized: f64,
}

/// Per-eigendirection moments at each parameter point and their average.
#[derive(Clone, Debug, PartialEq)]
pub struct CncEstimate {
    /// One record list per parameter point, ordered by ascending eigenvalue.
    pub per_point: Vec<Vec<CncRecord>>,
    /// Averages over the points, direction by direction.
    pub records: Vec<CncRecord>,
    pub m: usize,
    pub n: usize,
}

impl CncEstimate {
    /// Moment along the minimum-eigenvalue direction.
    pub fn gamma(&self) -> f64 {
        self.records[0].mu
    }

    pub fn write_csv<W: Write>(&self, mut out: W, header: &[String]) -> Result<()> {
        out.write_all(comment_block(header).as_bytes())?;
        writeln!(out, "point,k,lambda,mu,mu_normalized")?;
        let rows = self
            .per_point
            .iter()
            .enumerate()
            .map(|(i, recs)| (i.to_string(), recs))
            .chain(std::iter::once(("mean".to_string(), &self.records)));
        for (label, recs) in rows {
            for r in recs {
                let fields =
                    [label.clone(), r.k.to_string(), fmt_f64(r.lambda), fmt_f64(r.mu), fmt_f64(r.mu_normalized)];
                writeln!(out, "{}", row(fields))?;
            }
        }
        Ok(())
    }
}

/// Exact projected moments at one point for the given spectrum.
pub fn projected_moments<O: StochasticObjective + ?Sized>(
    obj: &O,
    w: &Vector,
    spectrum: &SpectrumReport,
) -> Result<Vec<CncRecord>> {
    let d = spectrum.dim();
    let mut mu = vec![0.0; d];
    let mut mu_n = vec![0.0; d];
    let basis = spectrum.eigenvectors();
    for j in 0..obj.n_samples() {
        let g = obj.sample_grad(w, j)?;
        let p = obj.sample_weight(j);
        let proj = basis.tr_mul(&g);
        let norm2 = g.norm_squared();
        for k in 0..d {
            let s = proj[k] * proj[k];
            mu[k] += p * s;
            if norm2 > 0.0 {
                mu_n[k] += p * s / norm2;
            }
        }
    }
    Ok((0..d)
        .map(|k| CncRecord { k, lambda: spectrum.eigenvalues()[k], mu: mu[k], mu_normalized: mu_n[k] })
        .collect())
}

/// Projected second moments of the stochastic gradients on every Hessian
/// eigenvector, at each of the points `w_points`, computed exactly over the
/// whole sample set.
pub fn estimate_cnc<O: StochasticObjective + ?Sized>(obj: &O, w_points: &[Vector]) -> Result<CncEstimate> {
    if w_points.is_empty() {
        return Err(Error::InvalidCount("at least one parameter point is required".into()));
    }
    let mut per_point = Vec::with_capacity(w_points.len());
    for w in w_points {
        let spectrum = hessian_spectrum(obj, w)?;
        per_point.push(projected_moments(obj, w, &spectrum)?);
    }
    let m = per_point.len() as f64;
    let d = obj.dim();
    let records = (0..d)
        .map(|k| CncRecord {
            k,
            lambda: per_point.iter().map(|r| r[k].lambda).sum::<f64>() / m,
            mu: per_point.iter().map(|r| r[k].mu).sum::<f64>() / m,
            mu_normalized: per_point.iter().map(|r| r[k].mu_normalized).sum::<f64>() / m,
        })
        .collect();
    Ok(CncEstimate { per_point, records, m: w_points.len(), n: obj.n_samples() })
}

const CHUNK: usize = 4096;

/// Mean of `(vᵀu)²` over `n_draws` directions `u` uniform on the unit sphere,
/// for each `v` in `directions`.
pub fn isotropic_baseline(d: usize, n_draws: usize, directions: &[Vector], seed: u64) -> Result<Vec<f64>> {
    isotropic_baseline_with(Execution::default(), d, n_draws, directions, seed)
}

/// [`isotropic_baseline`] with an explicit execution mode. Draws are split into
/// fixed chunks with their own RNG streams, so the result does not depend on
/// the mode.
pub fn isotropic_baseline_with(
    exec: Execution,
    d: usize,
    n_draws: usize,
    directions: &[Vector],
    seed: u64,
) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    if n_draws == 0 {
        return Err(Error::InvalidCount("n_draws must be positive".into()));
    }
    for v in directions {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.len() });
        }
    }
    let units: Vec<Vector> = directions.iter().map(|v| v.normalize()).collect();
    let n_chunks = n_draws.div_ceil(CHUNK);
    let partial = exec.map_range(n_chunks, |c| {
        let mut rng = rng_stream(seed, c as u64);
        let count = CHUNK.min(n_draws - c * CHUNK);
        let mut sums = vec![0.0; units.len()];
        let mut u = Vector::zeros(d);
        for _ in 0..count {
            loop {
                for x in u.iter_mut() {
                    *x = StandardNormal.sample(&mut rng);
                }
                let n = u.norm();
                if n > 0.0 {
                    u /= n;
                    break;
                }
            }
            for (s, v) in sums.iter_mut().zip(&units) {
                let p = v.dot(&u);
                *s += p * p;
            }
        }
        sums
    });
    let mut totals = vec![0.0; units.len()];
    for sums in partial {
        for (t, s) in totals.iter_mut().zip(sums) {
            *t += s;
        }
    }
    Ok(totals.into_iter().map(|t| t / n_draws as f64).collect())
}

/// Least-squares slope of `log(moment)` against `log(dim)`.
pub fn fit_dimension_slope(dims: &[f64], moments: &[f64]) -> Result<f64> {
    if dims.len() != moments.len() {
        return Err(Error::DegenerateInput("dims and moments differ in length".into()));
    }
    if dims.len() < 3 {
        return Err(Error::DegenerateInput(format!("need at least 3 points, got {}", dims.len())));
    }
    if dims.iter().chain(moments).any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::DegenerateInput("dimensions and moments must be positive".into()));
    }
    let xs: Vec<f64> = dims.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateInput("all dimensions are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBoundEntry {
    pub lambda: f64,
    pub mu: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Check of `E_z[(∇f_z(w)ᵀv)²] ≥ (λ/c)²` on every negative eigenpair.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundReport {
    pub entries: Vec<LowerBoundEntry>,
}

impl LowerBoundReport {
    pub fn all_hold(&self) -> bool {
        self.entries.iter().all(|e| e.holds)
    }
}

/// Verifies the variance lower bound of unregularised half-space objectives at `w`.
pub fn verify_cnc_lower_bound(p: &HalfspaceProblem, w: &Vector) -> Result<LowerBoundReport> {
    if p.reg_weight() != 0.0 {
        return Err(Error::RegularizerPresent(p.reg_weight()));
    }
    let h = p.analytic_hessian(w).expect("half-space Hessian is analytic")?;
    let spectrum = sym_eig(&h)?;
    let c = p.loss().c_const();
    let records = projected_moments(p, w, &spectrum)?;
    let entries = records
        .into_iter()
        .filter(|r| r.lambda < 0.0)
        .map(|r| {
            let bound = (r.lambda / c).powi(2);
            LowerBoundEntry { lambda: r.lambda, mu: r.mu, bound, holds: r.mu >= bound - 1e-9 }
        })
        .collect();
    Ok(LowerBoundReport { entries })
}
