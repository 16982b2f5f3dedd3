use super::{check_dim, LossFn, Objective, StochasticObjective};
use crate::csvfmt::{comment_block, fmt_f64, parse_f64, row};
use crate::rngs::rng_from;
use crate::{Error, Matrix, Result, Vector};
use rand_distr::{Distribution, StandardNormal};
use std::io::{BufRead, Write};

const NORM_SLACK: f64 = 1e-12;

/// Learning half-spaces: `f(w) = (1/n) Σ φ(wᵀz_i) + reg_weight · ½‖w‖²`
/// with every `z_i` inside the unit ball.
///
/// Labels are folded into the data, `z_i = -y_i x_i` with `y_i ∈ {-1, +1}`.
#[derive(Clone, Debug)]
pub struct HalfspaceProblem {
    data: Vec<Vector>,
    labels: Option<Vec<f64>>,
    loss: LossFn,
    reg_weight: f64,
    dim: usize,
}

impl HalfspaceProblem {
    pub fn new(data: Vec<Vector>, loss: LossFn, reg_weight: f64) -> Result<Self> {
        let Some(first) = data.first() else {
            return Err(Error::EmptyDataset);
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidProblem("dimension must be at least 1".into()));
        }
        for (i, z) in data.iter().enumerate() {
            check_dim(dim, z)?;
            let n = z.norm();
            if n.is_nan() || n > 1.0 + NORM_SLACK {
                return Err(Error::InvalidProblem(format!("sample {i} has norm {n} > 1")));
            }
        }
        if !(reg_weight >= 0.0 && reg_weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("reg_weight must be nonnegative, got {reg_weight}")));
        }
        Ok(Self { data, labels: None, loss, reg_weight, dim })
    }

    pub fn with_loss(mut self, loss: LossFn) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_reg_weight(mut self, reg_weight: f64) -> Result<Self> {
        if !(reg_weight >= 0.0 && reg_weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("reg_weight must be nonnegative, got {reg_weight}")));
        }
        self.reg_weight = reg_weight;
        Ok(self)
    }

    pub fn data(&self) -> &[Vector] {
        &self.data
    }
    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }
    pub fn loss(&self) -> &LossFn {
        &self.loss
    }
    pub fn reg_weight(&self) -> f64 {
        self.reg_weight
    }
    pub fn n_samples(&self) -> usize {
        self.data.len()
    }

    pub fn max_data_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Gradient-Lipschitz bound `sup|φ''| · max‖z‖² + reg_weight`.
    pub fn smoothness_bound(&self) -> f64 {
        let z = self.max_data_norm();
        sup_abs(|a| self.loss.d2phi(a)) * z * z + self.reg_weight
    }

    /// Hessian-Lipschitz bound `sup|φ'''| · max‖z‖³`, inflated by 10% to
    /// cover the grid scan.
    pub fn hessian_lipschitz_bound(&self) -> f64 {
        let z = self.max_data_norm();
        1.1 * sup_abs(|a| self.loss.d3phi(a)) * z * z * z
    }

    /// Bound on `‖∇f_z(w)‖` over `‖w‖ ≤ radius`.
    pub fn sample_grad_bound(&self, radius: f64) -> f64 {
        sup_abs(|a| self.loss.dphi(a)) * self.max_data_norm() + self.reg_weight * radius
    }

    /// Writes the dataset as CSV: a `#` header block, a column header, then one
    /// row per sample holding the folded coordinates followed by the label.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header = vec![
            format!("halfspace dataset: n = {}, d = {}", self.n_samples(), self.dim),
            "coordinates are the folded samples z_i = -y_i * x_i / max_j ||x_j||".to_string(),
            "label column holds y_i in {-1, +1}; 0 when the source carried no label".to_string(),
            format!("loss = {}, reg_weight = {}", self.loss.name(), fmt_f64(self.reg_weight)),
        ];
        out.write_all(comment_block(&header).as_bytes())?;
        let cols: Vec<String> = (1..=self.dim).map(|j| format!("z{j}")).chain(["label".to_string()]).collect();
        writeln!(out, "{}", row(&cols))?;
        for (i, z) in self.data.iter().enumerate() {
            let label = self.labels.as_ref().map_or(0.0, |l| l[i]);
            let fields: Vec<String> = z.iter().copied().chain([label]).map(fmt_f64).collect();
            writeln!(out, "{}", row(&fields))?;
        }
        Ok(())
    }

    /// Reads a dataset written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(input: R, loss: LossFn, reg_weight: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(input);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::InvalidProblem(format!("row {i} has {} fields, need >= 2", rec.len())));
            }
            let vals: Option<Vec<f64>> = rec.iter().map(parse_f64).collect();
            let vals = vals.ok_or_else(|| Error::InvalidProblem(format!("row {i} has a non-numeric field")))?;
            let (label, coords) = vals.split_last().expect("len >= 2");
            labels.push(*label);
            data.push(Vector::from_column_slice(coords));
        }
        let mut p = Self::new(data, loss, reg_weight)?;
        p.labels = Some(labels);
        Ok(p)
    }

    fn margins(&self, w: &Vector) -> impl Iterator<Item = (f64, &Vector)> + '_ {
        let w = w.clone();
        self.data.iter().map(move |z| (w.dot(z), z))
    }
}

fn sup_abs(f: impl Fn(f64) -> f64) -> f64 {
    (-50_000..=50_000).map(|i| f(i as f64 * 1e-3).abs()).fold(0.0, f64::max)
}

/// Two Gaussian classes `N(±μ, I)` with `‖μ‖ = separation` along `e₁`,
/// `n/2` samples each, labels folded into the data, then every sample scaled
/// by `1 / max_i ‖x_i‖`. Returns the unregularized sigmoid problem.
pub fn make_gaussian_halfspace(n: usize, d: usize, separation: f64, seed: u64) -> Result<HalfspaceProblem> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidCount(format!("n must be even and positive, got {n}")));
    }
    if d == 0 {
        return Err(Error::InvalidProblem("dimension must be at least 1".into()));
    }
    let mut rng = rng_from(seed);
    let mut mu = Vector::zeros(d);
    mu[0] = separation;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let y = if i < n / 2 { 1.0 } else { -1.0 };
        let noise = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        xs.push(&mu * y + noise);
        ys.push(y);
    }
    let scale = xs.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let data = xs.iter().zip(&ys).map(|(x, &y)| x * (-y / scale)).collect();
    let mut p = HalfspaceProblem::new(data, super::loss_sigmoid(), 0.0)?;
    p.labels = Some(ys);
    Ok(p)
}

impl Objective for HalfspaceProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, w: &Vector) -> Result<f64> {
        check_dim(self.dim, w)?;
        let mean = self.margins(w).map(|(a, _)| self.loss.phi(a)).sum::<f64>() / self.n_samples() as f64;
        Ok(mean + 0.5 * self.reg_weight * w.norm_squared())
    }

    fn grad(&self, w: &Vector) -> Result<Vector> {
        check_dim(self.dim, w)?;
        let mut g = Vector::zeros(self.dim);
        for (a, z) in self.margins(w) {
            g.axpy(self.loss.dphi(a), z, 1.0);
        }
        g /= self.n_samples() as f64;
        g.axpy(self.reg_weight, w, 1.0);
        Ok(g)
    }

    fn analytic_hessian(&self, w: &Vector) -> Option<Result<Matrix>> {
        if let Err(e) = check_dim(self.dim, w) {
            return Some(Err(e));
        }
        let mut h = Matrix::zeros(self.dim, self.dim);
        for (a, z) in self.margins(w) {
            h.ger(self.loss.d2phi(a), z, z, 1.0);
        }
        h /= self.n_samples() as f64;
        for i in 0..self.dim {
            h[(i, i)] += self.reg_weight;
        }
        // ger accumulates identical (i,j) and (j,i) products, but force exact symmetry
        let h = (&h + h.transpose()) * 0.5;
        Some(Ok(h))
    }
}

impl StochasticObjective for HalfspaceProblem {
    fn n_samples(&self) -> usize {
        self.data.len()
    }

    fn sample_grad(&self, w: &Vector, index: usize) -> Result<Vector> {
        check_dim(self.dim, w)?;
        let z = self.data.get(index).ok_or(Error::IndexOutOfRange { index, n: self.data.len() })?;
        let mut g = z * self.loss.dphi(w.dot(z));
        g.axpy(self.reg_weight, w, 1.0);
        Ok(g)
    }
}
