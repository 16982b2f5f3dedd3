use crate::problems::Objective;
use crate::spectrum::hessian_spectrum;
use crate::{Error, Result, Vector};

/// Result of a saddle search.
#[derive(Clone, Debug, PartialEq)]
pub struct SaddlePoint {
    pub point: Vector,
    pub grad_norm: f64,
    pub lambda_min: f64,
    pub iterations: usize,
}

fn half_sq_grad<O: Objective + ?Sized>(obj: &O, w: &Vector) -> Result<(f64, Vector)> {
    let g = obj.grad(w)?;
    Ok((0.5 * g.norm_squared(), g))
}

/// Gradient of `½‖∇f‖²`, i.e. `∇²f(w)∇f(w)`, by a central difference of the
/// gradient along `∇f(w)`.
fn sq_grad_gradient<O: Objective + ?Sized>(obj: &O, w: &Vector, g: &Vector) -> Result<Vector> {
    let gn = g.norm();
    if gn == 0.0 {
        return Ok(Vector::zeros(w.len()));
    }
    let h = 1e-6 * w.norm().max(1.0) / gn;
    let gp = obj.grad(&(w + g * h))?;
    let gm = obj.grad(&(w - g * h))?;
    Ok((gp - gm) / (2.0 * h))
}

/// Minimises `½‖∇f(w)‖²` by gradient descent with backtracking from
/// `w_start` until `‖∇f‖ ≤ eps_g`, then requires a negative Hessian eigenvalue.
pub fn find_saddle_init<O: Objective + ?Sized>(
    obj: &O,
    w_start: &Vector,
    eps_g: f64,
    max_iters: usize,
) -> Result<SaddlePoint> {
    if eps_g.is_nan() || eps_g <= 0.0 {
        return Err(Error::InvalidParameter(format!("eps_g must be positive, got {eps_g}")));
    }
    let mut w = w_start.clone();
    let (mut val, mut g) = half_sq_grad(obj, &w)?;
    let mut step = 1.0;
    let mut iterations = 0;
    while g.norm() > eps_g {
        if iterations == max_iters {
            return Err(Error::NoSaddleFound(format!(
                "gradient norm {:e} after {max_iters} iterations",
                g.norm()
            )));
        }
        iterations += 1;
        let dir = sq_grad_gradient(obj, &w, &g)?;
        let slope = dir.norm_squared();
        if slope == 0.0 {
            return Err(Error::NoSaddleFound("squared gradient norm is stationary but not zero".into()));
        }
        step *= 2.0;
        loop {
            let cand = &w - &dir * step;
            let (cv, cg) = half_sq_grad(obj, &cand)?;
            if cv <= val - 0.25 * step * slope {
                w = cand;
                val = cv;
                g = cg;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::NoSaddleFound("line search failed".into()));
            }
        }
        if !w.iter().all(|x| x.is_finite()) || w.norm() > 1e6 {
            return Err(Error::NoSaddleFound("search diverged".into()));
        }
    }
    let lambda_min = hessian_spectrum(obj, &w)?.lambda_min();
    if lambda_min >= 0.0 {
        return Err(Error::NoSaddleFound(format!("stationary point has lambda_min = {lambda_min:e} >= 0")));
    }
    Ok(SaddlePoint { grad_norm: g.norm(), point: w, lambda_min, iterations })
}
