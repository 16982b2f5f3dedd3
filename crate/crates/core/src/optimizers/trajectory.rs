use crate::csvfmt::{comment_block, fmt_f64, row};
use crate::rngs::rng_from;
use crate::{Error, Result, Vector};
use rand::Rng as _;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Gd,
    Sgd,
    IsoPgd,
    CncPgd,
    CncSgd,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Gd, Method::Sgd, Method::IsoPgd, Method::CncPgd, Method::CncSgd];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Sgd => "sgd",
            Method::IsoPgd => "iso_pgd",
            Method::CncPgd => "cnc_pgd",
            Method::CncSgd => "cnc_sgd",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self != Method::Gd
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// What an optimizer run keeps beyond the per-iteration scalars.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Store the full iterate every `snapshot_every` iterations.
    pub snapshot_every: usize,
    /// Store the per-step gradient noise `∇f(w_t) − ∇f_z(w_t)`.
    pub log_noise: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { snapshot_every: 1, log_noise: false }
    }
}

/// Per-iteration log of one optimizer run.
///
/// Index `t` refers to the iterate `w_t`; `w_0` is the starting point, so a
/// run of `T` steps stores `T + 1` function values. A step "at `t`" maps `w_t`
/// to `w_{t+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub method: Method,
    pub seed: Option<u64>,
    /// Snapshots `(t, w_t)` in increasing `t`.
    pub iterates: Vec<(usize, Vector)>,
    pub f_values: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// Steps that were perturbations (CNC-PGD, ISO-PGD) or large steps (CNC-SGD).
    pub perturbation_steps: Vec<usize>,
    /// Step size used at every step.
    pub step_sizes: Vec<f64>,
    /// Per-step gradient noise, present when requested in [`RunOptions`].
    pub noise: Option<Vec<Vector>>,
    /// Iterate indices the method returns a uniform pick from.
    pub candidates: Vec<usize>,
    /// The uniformly chosen returned iterate, when the candidate set is non-empty.
    pub picked: Option<(usize, Vector)>,
    /// `(name, value)` pairs echoed in CSV headers.
    pub params: Vec<(String, String)>,
}

impl Trajectory {
    pub(crate) fn new(method: Method, seed: Option<u64>, params: Vec<(String, String)>) -> Self {
        Self {
            method,
            seed,
            iterates: Vec::new(),
            f_values: Vec::new(),
            grad_norms: Vec::new(),
            perturbation_steps: Vec::new(),
            step_sizes: Vec::new(),
            noise: None,
            candidates: Vec::new(),
            picked: None,
            params,
        }
    }

    /// Number of steps taken.
    pub fn n_steps(&self) -> usize {
        self.f_values.len().saturating_sub(1)
    }

    pub fn final_f(&self) -> f64 {
        *self.f_values.last().expect("trajectory holds w0")
    }

    pub fn final_grad_norm(&self) -> f64 {
        *self.grad_norms.last().expect("trajectory holds w0")
    }

    /// The stored iterate `w_t`, if it was snapshotted.
    pub fn iterate(&self, t: usize) -> Option<&Vector> {
        self.iterates.binary_search_by_key(&t, |(s, _)| *s).ok().map(|i| &self.iterates[i].1)
    }

    pub fn is_perturbed(&self, t: usize) -> bool {
        self.perturbation_steps.binary_search(&t).is_ok()
    }

    /// Writes `iter, f, grad_norm, perturbed_flag` rows after a `#` header
    /// echoing the method and its parameters.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(comment_block(&self.header_lines()).as_bytes())?;
        writeln!(out, "iter,f,grad_norm,perturbed_flag")?;
        for t in 0..self.f_values.len() {
            let flag = if self.is_perturbed(t) { "1" } else { "0" };
            writeln!(
                out,
                "{}",
                row([t.to_string(), fmt_f64(self.f_values[t]), fmt_f64(self.grad_norms[t]), flag.to_string()])
            )?;
        }
        Ok(())
    }

    pub fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("method = {}", self.method)];
        if let Some(s) = self.seed {
            lines.push(format!("seed = {s}"));
        }
        lines.extend(self.params.iter().map(|(k, v)| format!("{k} = {v}")));
        lines
    }
}

/// Draws uniformly from the trajectory's candidate iterates that were retained
/// as snapshots.
pub fn pick_uniform_iterate(traj: &Trajectory, seed: u64) -> Result<(usize, Vector)> {
    let retained: Vec<(usize, &Vector)> =
        traj.candidates.iter().filter_map(|&t| traj.iterate(t).map(|w| (t, w))).collect();
    if retained.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let mut rng = rng_from(seed);
    let (t, w) = retained[rng.random_range(0..retained.len())];
    Ok((t, w.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_candidates(n: usize) -> Trajectory {
        let mut t = Trajectory::new(Method::CncPgd, Some(0), vec![]);
        for i in 0..n {
            t.iterates.push((i, Vector::from_element(1, i as f64)));
            t.f_values.push(0.0);
            t.grad_norms.push(0.0);
            t.candidates.push(i);
        }
        t
    }

    #[test]
    fn single_candidate() {
        let t = with_candidates(1);
        assert_eq!(pick_uniform_iterate(&t, 3).unwrap().0, 0);
        let empty = Trajectory::new(Method::Gd, None, vec![]);
        assert!(matches!(pick_uniform_iterate(&empty, 0), Err(Error::EmptyCandidateSet)));
    }

    #[test]
    fn picks_are_uniform_and_reproducible() {
        let t = with_candidates(4);
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for s in 0..draws {
            counts[pick_uniform_iterate(&t, s).unwrap().0] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 0.02 * 0.25);
        }
        assert_eq!(pick_uniform_iterate(&t, 11).unwrap(), pick_uniform_iterate(&t, 11).unwrap());
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("adam".parse::<Method>().is_err());
    }
}
