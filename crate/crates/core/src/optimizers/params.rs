use crate::{Error, Result};

/// Problem constants entering the parameter derivations and the analysis bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessConstants {
    /// Gradient Lipschitz constant `L`.
    pub l_smooth: f64,
    /// Bound `ℓ` on per-sample gradient norms.
    pub ell: f64,
    /// Hessian Lipschitz constant `ρ`.
    pub rho: f64,
    /// Correlated-negative-curvature constant `γ`.
    pub gamma: f64,
    /// Failure probability `δ`.
    pub delta: f64,
    /// `f(w₀) − f*`.
    pub f_gap: f64,
}

impl SmoothnessConstants {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [("l_smooth", self.l_smooth), ("ell", self.ell), ("rho", self.rho)] {
            if !(v >= 1.0 && v.is_finite()) {
                bad.push(format!("{name} must be a finite value >= 1, got {v}"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            bad.push(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bad.push(format!("delta must lie in (0,1), got {}", self.delta));
        }
        if !(self.f_gap >= 0.0 && self.f_gap.is_finite()) {
            bad.push(format!("f_gap must be non-negative, got {}", self.f_gap));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(bad.join("; ")))
        }
    }
}

/// Hyperparameters of gradient descent perturbed by single stochastic steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgdParams {
    pub eta: f64,
    pub r: f64,
    pub tr: usize,
    pub f_thres: f64,
    pub g_thres: f64,
    pub t_max: usize,
    /// Logarithmic factor of the escape window, when derived.
    pub omega: Option<f64>,
}

impl PgdParams {
    /// Practical parameters; `f_thres` is set to `g_thres · tr`.
    pub fn practical(eta: f64, r: f64, g_thres: f64, tr: usize, t_max: usize) -> Result<Self> {
        let p = Self { eta, r, tr, f_thres: g_thres * tr as f64, g_thres, t_max, omega: None };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidParameter(format!("r must be non-negative, got {}", self.r)));
        }
        if self.tr == 0 {
            return Err(Error::InvalidParameter("tr must be at least 1".into()));
        }
        if !(self.g_thres >= 0.0 && self.f_thres >= 0.0) {
            return Err(Error::InvalidParameter("thresholds must be non-negative".into()));
        }
        Ok(())
    }
}

/// Hyperparameters of SGD with a periodically enlarged step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdParams {
    pub r: f64,
    pub eta: f64,
    pub tr: usize,
    pub t_max: usize,
}

impl SgdParams {
    pub fn new(r: f64, eta: f64, tr: usize, t_max: usize) -> Result<Self> {
        let p = Self { r, eta, tr, t_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite() && self.r.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if self.eta >= self.r {
            return Err(Error::StepOrderViolation { eta: self.eta, r: self.r });
        }
        if self.tr == 0 {
            return Err(Error::InvalidParameter("tr must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgdConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for PgdConstants {
    fn default() -> Self {
        Self { c1: 1.0 / 64.0, c2: 1.0, c3: 1.0 / 4096.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for SgdConstants {
    fn default() -> Self {
        let c1 = 1.0 / 96.0;
        Self { c1, c2: c1 / 48.0, c3: 1.0, c4: c1 / 72.0 }
    }
}

/// Derived parameters together with the real-valued quantities before rounding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgdDerivation {
    pub params: PgdParams,
    pub omega: f64,
    pub tr_exact: f64,
    pub g_thres_exact: f64,
    pub t_exact: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdDerivation {
    pub params: SgdParams,
    pub omega: f64,
    pub tr_exact: f64,
    pub f_thres: f64,
    pub t_exact: f64,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidEps(eps))
    }
}

fn ceil_count(x: f64) -> usize {
    // saturating float-to-int conversion
    x.ceil().max(1.0) as usize
}

/// Theoretical parameters for CNC-PGD at target accuracy `eps`.
pub fn derive_pgd_params(c: &SmoothnessConstants, eps: f64, k: PgdConstants) -> Result<PgdDerivation> {
    check_eps(eps)?;
    c.validate()?;
    let SmoothnessConstants { l_smooth: l, ell, rho, gamma, delta, f_gap } = *c;
    let eta = 1.0 / l;
    let r = k.c1 * delta * gamma * eps.powf(0.8) / (ell.powi(3) * l * l);
    let omega = (ell * l / (gamma * delta * eps)).ln();
    let tr_exact = k.c2 * l / (rho.sqrt() * eps.powf(0.4)) * omega;
    let tr = ceil_count(tr_exact);
    let f_thres = k.c3 * delta * gamma * gamma * eps.powf(1.6) / (ell * ell * l).powi(2);
    let g_thres = f_thres / tr as f64;
    let g_thres_exact = f_thres / tr_exact;
    let t_exact = 4.0 * f_gap / (eta * delta * g_thres_exact);
    let t_max = (4.0 * f_gap / (eta * delta * g_thres)).ceil() as usize;
    Ok(PgdDerivation {
        params: PgdParams { eta, r, tr, f_thres, g_thres, t_max, omega: Some(omega) },
        omega,
        tr_exact,
        g_thres_exact,
        t_exact,
    })
}

/// Theoretical parameters for CNC-SGD at target accuracy `eps`.
pub fn derive_sgd_params(c: &SmoothnessConstants, eps: f64, k: SgdConstants) -> Result<SgdDerivation> {
    check_eps(eps)?;
    c.validate()?;
    let SmoothnessConstants { l_smooth: l, ell, gamma, delta, f_gap, .. } = *c;
    let r = k.c1 * delta * gamma * eps * eps / (ell.powi(3) * l);
    let eta = k.c4 * gamma * gamma * delta * delta * eps.powi(5) / (ell.powi(6) * l * l);
    if eta >= r {
        return Err(Error::StepOrderViolation { eta, r });
    }
    let omega = k.c3 * (ell * l / (eta * eps * r)).ln();
    let tr_exact = omega / (eta * eps);
    let tr = ceil_count(tr_exact);
    let f_thres = k.c2 * delta * gamma * gamma * eps.powi(4) / (ell.powi(4) * l);
    let t_exact = 2.0 * tr_exact * f_gap / (delta * f_thres);
    let t_max = (2.0 * tr as f64 * f_gap / (delta * f_thres)).ceil() as usize;
    Ok(SgdDerivation { params: SgdParams { r, eta, tr, t_max }, omega, tr_exact, f_thres, t_exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_constants() -> SmoothnessConstants {
        SmoothnessConstants { l_smooth: 1.0, ell: 1.0, rho: 1.0, gamma: 1.0, delta: 0.5, f_gap: 1.0 }
    }

    #[test]
    fn pgd_closed_forms() {
        let d = derive_pgd_params(&unit_constants(), 0.5, PgdConstants::default()).unwrap();
        assert_eq!(d.params.eta, 1.0);
        // 0.5^0.8 = 0.57434917749851755...
        assert!((d.params.r - 0.574_349_177_498_517_6 / 128.0).abs() < 1e-17);
        assert!((d.omega - 4f64.ln()).abs() < 1e-15);
        assert_eq!(d.params.tr, 2);
        assert!((d.params.g_thres * 2.0 - d.params.f_thres).abs() < 1e-20);
    }

    #[test]
    fn sgd_step_order() {
        let d = derive_sgd_params(&unit_constants(), 0.5, SgdConstants::default()).unwrap();
        assert!(d.params.eta < d.params.r);
        let strict = SgdConstants { c4: 1.0, ..SgdConstants::default() };
        assert!(matches!(
            derive_sgd_params(&unit_constants(), 0.5, strict),
            Err(Error::StepOrderViolation { .. })
        ));
    }

    #[test]
    fn input_validation() {
        let c = unit_constants();
        assert!(matches!(derive_pgd_params(&c, 1.0, PgdConstants::default()), Err(Error::InvalidEps(_))));
        assert!(matches!(derive_sgd_params(&c, 0.0, SgdConstants::default()), Err(Error::InvalidEps(_))));
        let zero_delta = SmoothnessConstants { delta: 0.0, ..c };
        assert!(derive_sgd_params(&zero_delta, 0.5, SgdConstants::default()).is_err());
        assert!(matches!(SgdParams::new(0.1, 0.1, 1, 10), Err(Error::StepOrderViolation { .. })));
    }

    fn assert_ratio(a: f64, b: f64, expected: f64) {
        assert!(((a / b) / expected - 1.0).abs() < 1e-12, "{} vs {}", a / b, expected);
    }

    proptest! {
        #[test]
        fn epsilon_scaling(
            eps in 0.01f64..0.9,
            l in 1.0f64..5.0,
            ell in 1.0f64..3.0,
            rho in 1.0f64..4.0,
            gamma in 0.1f64..2.0,
            delta in 0.05f64..0.95,
        ) {
            let c = SmoothnessConstants { l_smooth: l, ell, rho, gamma, delta, f_gap: 2.0 };
            let a = derive_pgd_params(&c, eps, PgdConstants::default()).unwrap();
            let b = derive_pgd_params(&c, eps / 2.0, PgdConstants::default()).unwrap();
            assert_ratio(a.params.r, b.params.r, 2f64.powf(0.8));
            assert_ratio(a.params.f_thres, b.params.f_thres, 2f64.powf(1.6));
            assert_ratio(a.tr_exact / a.omega, b.tr_exact / b.omega, 2f64.powf(-0.4));
            assert_ratio(a.t_exact / a.omega, b.t_exact / b.omega, 0.25);
            prop_assert_eq!(a.params.eta, b.params.eta);

            let a = derive_sgd_params(&c, eps, SgdConstants::default()).unwrap();
            let b = derive_sgd_params(&c, eps / 2.0, SgdConstants::default()).unwrap();
            assert_ratio(a.params.r, b.params.r, 4.0);
            assert_ratio(a.params.eta, b.params.eta, 32.0);
            assert_ratio(a.f_thres, b.f_thres, 16.0);
            assert_ratio(a.tr_exact / a.omega, b.tr_exact / b.omega, 2f64.powi(-6));
            assert_ratio(a.t_exact / a.omega, b.t_exact / b.omega, 2f64.powi(-10));
        }
    }
}
