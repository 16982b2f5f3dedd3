use crate::{Error, Result};
use std::fmt;
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar loss `φ` with its first three derivatives and the constant `c`
/// of the bound `|φ''(α)| ≤ c |φ'(α)|`.
#[derive(Clone)]
pub struct LossFn {
    name: String,
    phi: ScalarFn,
    dphi: ScalarFn,
    d2phi: ScalarFn,
    d3phi: ScalarFn,
    c_const: f64,
}

impl fmt::Debug for LossFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossFn").field("name", &self.name).field("c_const", &self.c_const).finish()
    }
}

impl LossFn {
    /// Builds a custom loss. `c_const` must be positive.
    pub fn new(
        name: impl Into<String>,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dphi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d3phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        c_const: f64,
    ) -> Result<Self> {
        if !(c_const > 0.0 && c_const.is_finite()) {
            return Err(Error::InvalidParameter(format!("loss constant c must be positive, got {c_const}")));
        }
        Ok(Self {
            name: name.into(),
            phi: Arc::new(phi),
            dphi: Arc::new(dphi),
            d2phi: Arc::new(d2phi),
            d3phi: Arc::new(d3phi),
            c_const,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn phi(&self, a: f64) -> f64 {
        (self.phi)(a)
    }
    pub fn dphi(&self, a: f64) -> f64 {
        (self.dphi)(a)
    }
    pub fn d2phi(&self, a: f64) -> f64 {
        (self.d2phi)(a)
    }
    pub fn d3phi(&self, a: f64) -> f64 {
        (self.d3phi)(a)
    }
    pub fn c_const(&self) -> f64 {
        self.c_const
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `φ(α) = 1 / (1 + e^{-α})`, with `c = 1` since `σ'' = σ'(1 - 2σ)`.
pub fn loss_sigmoid() -> LossFn {
    loss_sigmoid_sharp(1.0).expect("unit sharpness is valid")
}

/// `φ(α) = σ(kα)`. Equivalent to the plain sigmoid on data scaled by `k`,
/// which sharpens the curvature while the data stays in the unit ball.
/// Here `c = k`.
pub fn loss_sigmoid_sharp(k: f64) -> Result<LossFn> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigmoid sharpness must be positive, got {k}")));
    }
    let name = if k == 1.0 { "sigmoid".to_string() } else { format!("sigmoid(k={k})") };
    LossFn::new(
        name,
        move |a| sigmoid(k * a),
        move |a| {
            let s = sigmoid(k * a);
            k * s * (1.0 - s)
        },
        move |a| {
            let s = sigmoid(k * a);
            k * k * s * (1.0 - s) * (1.0 - 2.0 * s)
        },
        move |a| {
            let s = sigmoid(k * a);
            k * k * k * s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)
        },
        k,
    )
}

/// `φ(α) = α`.
pub fn loss_linear() -> LossFn {
    LossFn::new("linear", |a| a, |_| 1.0, |_| 0.0, |_| 0.0, 1.0).expect("valid")
}

/// `φ(α) = α²`. Its ratio `|φ''|/|φ'| = 1/|α|` is unbounded near zero, so
/// the stored constant is only a placeholder for tests on restricted grids.
pub fn loss_quadratic() -> LossFn {
    LossFn::new("quadratic", |a| a * a, |a| 2.0 * a, |_| 2.0, |_| 0.0, 1.0).expect("valid")
}

/// Tightest empirical `c` with `|φ''(α)| ≤ c |φ'(α)|` over `grid`.
///
/// Points where `|φ'(α)| < 1e-14` are skipped; if every point is skipped the
/// bound is undefined and [`Error::AllPointsDegenerate`] is returned.
pub fn verify_loss_condition(loss: &LossFn, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("grid must be non-empty".into()));
    }
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for &a in grid {
        let d1 = loss.dphi(a);
        if d1.abs() < 1e-14 {
            skipped += 1;
            continue;
        }
        worst = worst.max(loss.d2phi(a).abs() / d1.abs());
    }
    if skipped == grid.len() {
        return Err(Error::AllPointsDegenerate { skipped });
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    #[test]
    fn sigmoid_values_at_zero() {
        let s = loss_sigmoid();
        assert_eq!(s.phi(0.0), 0.5);
        assert_eq!(s.dphi(0.0), 0.25);
        assert_eq!(s.d2phi(0.0), 0.0);
        assert_eq!(s.c_const(), 1.0);
    }

    #[test]
    fn sigmoid_ratio_bounded_by_one() {
        let s = loss_sigmoid();
        let c = verify_loss_condition(&s, &grid(-20.0, 20.0, 1e-3)).unwrap();
        assert!(c <= 1.0, "c = {c}");
        assert!(c > 0.99);
        let c = verify_loss_condition(&s, &grid(-10.0, 10.0, 0.01)).unwrap();
        assert!(c <= 1.0);
    }

    #[test]
    fn sharp_sigmoid_ratio_bounded_by_k() {
        let s = loss_sigmoid_sharp(6.0).unwrap();
        let c = verify_loss_condition(&s, &grid(-5.0, 5.0, 1e-3)).unwrap();
        assert!(c <= 6.0 && c > 5.9);
    }

    #[test]
    fn linear_and_quadratic_ratios() {
        assert_eq!(verify_loss_condition(&loss_linear(), &grid(-3.0, 3.0, 0.5)).unwrap(), 0.0);
        assert_eq!(verify_loss_condition(&loss_quadratic(), &[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_grid_is_an_error() {
        let flat = LossFn::new("flat", |_| 1.0, |_| 0.0, |_| 0.0, |_| 0.0, 1.0).unwrap();
        assert!(matches!(
            verify_loss_condition(&flat, &[0.0, 1.0]),
            Err(Error::AllPointsDegenerate { skipped: 2 })
        ));
        // quadratic has φ'(0) = 0; the point is skipped but others count
        assert_eq!(verify_loss_condition(&loss_quadratic(), &[0.0, 2.0]).unwrap(), 0.5);
    }

    #[test]
    fn sigmoid_derivatives_match_finite_differences() {
        let s = loss_sigmoid_sharp(2.5).unwrap();
        let h = 1e-5;
        for &a in &[-3.0, -0.7, 0.0, 0.4, 2.2] {
            let fd1 = (s.phi(a + h) - s.phi(a - h)) / (2.0 * h);
            let fd2 = (s.dphi(a + h) - s.dphi(a - h)) / (2.0 * h);
            let fd3 = (s.d2phi(a + h) - s.d2phi(a - h)) / (2.0 * h);
            assert!((fd1 - s.dphi(a)).abs() < 1e-8);
            assert!((fd2 - s.d2phi(a)).abs() < 1e-8);
            assert!((fd3 - s.d3phi(a)).abs() < 1e-7);
        }
    }

    #[test]
    fn extreme_inputs_are_finite() {
        let s = loss_sigmoid();
        for &a in &[-800.0, -40.0, 40.0, 800.0] {
            assert!(s.phi(a).is_finite() && s.dphi(a).is_finite() && s.d2phi(a).is_finite());
        }
    }
}
