use nalgebra::{DMatrix, DVector};

use super::flow::exp_with_steps;
use super::manifold::ChartManifold;
use super::{Point, TangentVector};
use crate::error::{Error, Result};

const MAX_ITER: usize = 60;
const MAX_HALVINGS: usize = 40;

/// Inverse of the exponential map at `p`, by damped Newton shooting on the endpoint map.
///
/// The initial guess is the chart difference `x - p`; only reliable inside a strictly
/// convex neighbourhood of `p`.
pub fn riemannian_log(m: &ChartManifold, p: &Point, x: &Point, tol: f64) -> Result<TangentVector> {
    riemannian_log_with_steps(m, p, x, tol, m.steps())
}

pub fn riemannian_log_with_steps(
    m: &ChartManifold,
    p: &Point,
    x: &Point,
    tol: f64,
    steps: usize,
) -> Result<TangentVector> {
    m.check_domain(p.as_slice())?;
    m.check_domain(x.as_slice())?;
    let d = m.dim();
    if x == p {
        return Ok(TangentVector::new(p.clone(), DVector::zeros(d)));
    }
    let endpoint = |v: &DVector<f64>| exp_with_steps(m, p, v, steps);
    let floor = 64.0 * f64::EPSILON * (1.0 + x.amax());

    let mut v = x - p;
    let mut res = match endpoint(&v) {
        Ok(e) => e - x,
        Err(_) => {
            // Start shorter if the straight chart guess overshoots the domain.
            let mut scale = 0.5;
            loop {
                let cand = &v * scale;
                if let Ok(e) = endpoint(&cand) {
                    v = cand;
                    break e - x;
                }
                scale *= 0.5;
                if scale < 1e-6 {
                    return Err(Error::Convergence {
                        iterations: 0,
                        residual: f64::INFINITY,
                    });
                }
            }
        }
    };

    for iter in 0..MAX_ITER {
        let rn = res.norm();
        if rn <= tol {
            return Ok(TangentVector::new(p.clone(), v));
        }
        let h = 1e-6 * v.amax().max(1e-2);
        let mut jac = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut vp = v.clone();
            vp[j] += h;
            let mut vm = v.clone();
            vm[j] -= h;
            let col = (endpoint(&vp)? - endpoint(&vm)?) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let delta = jac.lu().solve(&(-&res)).ok_or(Error::Convergence {
            iterations: iter,
            residual: rn,
        })?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &v + &delta * alpha;
            if let Ok(e) = endpoint(&cand) {
                let r = e - x;
                if r.norm() < rn {
                    v = cand;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            if rn <= floor {
                return Ok(TangentVector::new(p.clone(), v));
            }
            return Err(Error::Convergence {
                iterations: iter,
                residual: rn,
            });
        }
    }
    Err(Error::Convergence {
        iterations: MAX_ITER,
        residual: res.norm(),
    })
}
