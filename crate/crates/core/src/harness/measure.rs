use super::config::{ExperimentConfig, MeasureFamily, MeasureSpec};
use crate::analysis::{estimate_cnc, fit_dimension_slope, isotropic_baseline_with, CncEstimate};
use crate::csvfmt::{comment_block, fmt_f64, row};
use crate::exec::Execution;
use crate::problems::{loss_sigmoid, make_gaussian_halfspace, Objective, TinyMlp};
use crate::rngs::{derive_seed, rng_from, tag};
use crate::spectrum::hessian_spectrum;
use crate::{Result, Vector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Measurements for one member of the swept family.
#[derive(Clone, Debug)]
pub struct MeasureBlock {
    pub family_value: usize,
    /// Number of parameters of the member.
    pub dim: usize,
    pub estimate: CncEstimate,
    /// Isotropic moment along each averaged eigen-direction, same order as
    /// `estimate.records`.
    pub isotropic: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MeasureTable {
    pub family: MeasureFamily,
    pub blocks: Vec<MeasureBlock>,
    /// Log-log slope of the isotropic moment along `v_min` against `dim`.
    pub slope_isotropic: Option<f64>,
    /// Same slope for the normalized stochastic-gradient moment.
    pub slope_cnc: Option<f64>,
}

fn ball_point(d: usize, radius: f64, seed: u64) -> Vector {
    let mut rng = rng_from(seed);
    let v = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    let u: f64 = rng.random();
    let n = v.norm();
    if n == 0.0 {
        return Vector::zeros(d);
    }
    v * (radius * u.powf(1.0 / d as f64) / n)
}

fn measure_member(spec: &MeasureSpec, rng_seed: u64, value: usize, exec: Execution) -> Result<MeasureBlock> {
    let point_seed = |i: usize| derive_seed(&[rng_seed, tag("measure-point"), value as u64, i as u64]);
    let (estimate, basis) = match spec.family {
        MeasureFamily::HalfspaceDim => {
            let p = make_gaussian_halfspace(spec.n, value, spec.separation, derive_seed(&[spec.data_seed, value as u64]))?
                .with_loss(loss_sigmoid());
            let points: Vec<Vector> = (0..spec.m).map(|i| ball_point(value, spec.point_radius, point_seed(i))).collect();
            (estimate_cnc(&p, &points)?, eigenbasis(&p, &points[0])?)
        }
        MeasureFamily::MlpWidth | MeasureFamily::MlpDepth => {
            let layers = if spec.family == MeasureFamily::MlpWidth {
                vec![4, value, 3]
            } else {
                let mut l = vec![4; value + 1];
                l.push(3);
                l
            };
            let net = TinyMlp::synthetic(layers, spec.n, derive_seed(&[spec.data_seed, value as u64]))?;
            let points: Vec<Vector> = (0..spec.m).map(|i| net.random_weights(point_seed(i), spec.weight_scale)).collect();
            (estimate_cnc(&net, &points)?, eigenbasis(&net, &points[0])?)
        }
    };
    let dim = estimate.records.len();
    let isotropic = isotropic_baseline_with(
        exec,
        dim,
        spec.iso_draws,
        &basis,
        derive_seed(&[rng_seed, tag("isotropic"), value as u64]),
    )?;
    Ok(MeasureBlock { family_value: value, dim, estimate, isotropic })
}

/// Eigenvectors of the Hessian at `w`, by ascending eigenvalue.
fn eigenbasis<O: Objective + ?Sized>(obj: &O, w: &Vector) -> Result<Vec<Vector>> {
    let s = hessian_spectrum(obj, w)?;
    Ok((0..s.dim()).map(|k| s.eigenvector(k)).collect())
}

/// Runs the configured measurement sweep in memory.
pub fn measure_table(cfg: &ExperimentConfig, exec: Execution) -> Result<MeasureTable> {
    let spec = &cfg.measure;
    let blocks = exec
        .map(&spec.values, |&v| measure_member(spec, cfg.rng_seed, v, Execution::Sequential))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (slope_isotropic, slope_cnc) = if blocks.len() >= 3 {
        let dims: Vec<f64> = blocks.iter().map(|b| b.dim as f64).collect();
        let iso: Vec<f64> = blocks.iter().map(|b| b.isotropic[0]).collect();
        let cnc: Vec<f64> = blocks.iter().map(|b| b.estimate.records[0].mu_normalized).collect();
        (fit_dimension_slope(&dims, &iso).ok(), fit_dimension_slope(&dims, &cnc).ok())
    } else {
        (None, None)
    };
    Ok(MeasureTable { family: spec.family.clone(), blocks, slope_isotropic, slope_cnc })
}

impl MeasureTable {
    pub fn write_csv<W: Write>(&self, mut out: W, header: &[String]) -> Result<()> {
        out.write_all(comment_block(header).as_bytes())?;
        writeln!(out, "family_value,dim,k,lambda,mu_raw,mu_normalized,isotropic")?;
        for b in &self.blocks {
            for (r, iso) in b.estimate.records.iter().zip(&b.isotropic) {
                let fields = [
                    b.family_value.to_string(),
                    b.dim.to_string(),
                    r.k.to_string(),
                    fmt_f64(r.lambda),
                    fmt_f64(r.mu),
                    fmt_f64(r.mu_normalized),
                    fmt_f64(*iso),
                ];
                writeln!(out, "{}", row(fields))?;
            }
        }
        let fmt = |s: Option<f64>| s.map(fmt_f64).unwrap_or_else(|| "n/a".into());
        writeln!(out, "# slope_isotropic_vmin = {}", fmt(self.slope_isotropic))?;
        writeln!(out, "# slope_cnc_normalized_vmin = {}", fmt(self.slope_cnc))?;
        Ok(())
    }
}

/// Runs the sweep and writes `measure.csv` to `out_dir`.
pub fn run_cnc_measurement(cfg: &ExperimentConfig, out_dir: &Path, exec: Execution) -> Result<(MeasureTable, PathBuf)> {
    let table = measure_table(cfg, exec)?;
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("measure.csv");
    let mut header = cfg.echo.clone();
    header.push(format!("family = {}", table.family.tag()));
    let mut buf = Vec::new();
    table.write_csv(&mut buf, &header)?;
    std::fs::write(&path, buf)?;
    Ok((table, path))
}
