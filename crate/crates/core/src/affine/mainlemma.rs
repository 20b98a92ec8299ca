use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    exp_with_steps, integrate_geodesic, parallel_transport, riemannian_log, ChartManifold, Point, TangentVector,
};

/// Default `dt = MAINLEMMA_DT_FACTOR · r²`.
pub const MAINLEMMA_DT_FACTOR: f64 = 0.1;
const LOG_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainLemmaReport {
    pub r_list: Vec<f64>,
    pub dt_list: Vec<f64>,
    /// `‖v_r − v_{−r}‖_g / r` with forward differences in `t`; `None` when a log failed.
    pub ratios: Vec<Option<f64>>,
    /// The same ratio with central differences, which removes the `O(dt)` error.
    pub central_ratios: Vec<Option<f64>>,
    /// `ratio(r_i) / ratio(r_{i+1})`.
    pub factors: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

/// Base point and transported `h` at `γ(t)`, for `t` of either sign.
fn moved(m: &ChartManifold, p: &Point, dir: &DVector<f64>, h: &DVector<f64>, t: f64) -> Result<(Point, DVector<f64>)> {
    if t == 0.0 {
        return Ok((p.clone(), h.clone()));
    }
    let c = integrate_geodesic(m, &TangentVector::new(p.clone(), dir * t.signum()), t.abs(), m.steps())?;
    let ht = parallel_transport(m, &c, &TangentVector::new(p.clone(), h.clone()))?;
    Ok((c.end().point.clone(), ht.components))
}

/// `μ_{t,s} = log_p(exp_{γ(t)}(s·h_t))`.
fn mu(m: &ChartManifold, p: &Point, at: &(Point, DVector<f64>), s: f64) -> Result<DVector<f64>> {
    let x = exp_with_steps(m, &at.0, &(&at.1 * s), m.steps())?;
    Ok(riemannian_log(m, p, &x, LOG_TOL)?.components)
}

fn ratio(m: &ChartManifold, p: &Point, lo: &(Point, DVector<f64>), hi: &(Point, DVector<f64>), width: f64, r: f64) -> Result<f64> {
    let v_plus = (mu(m, p, hi, r)? - mu(m, p, lo, r)?) / width;
    let v_minus = (mu(m, p, hi, -r)? - mu(m, p, lo, -r)?) / width;
    Ok(m.norm_at(p.as_slice(), &(v_plus - v_minus))? / r)
}

/// Ratio sequence `‖v_r − v_{−r}‖ / r` for `x_{t,±r} = exp(±r·h_t)` along the
/// geodesic `γ(t) = exp_p(t·γ_dir)`, with `dt = dt_factor · r²`.
pub fn mainlemma_check(
    m: &ChartManifold,
    p: &Point,
    gamma_dir: &TangentVector,
    h: &TangentVector,
    r_list: &[f64],
    dt_factor: f64,
) -> Result<MainLemmaReport> {
    gamma_dir.check_dim(m)?;
    h.check_dim(m)?;
    if (&gamma_dir.base - p).amax() > 1e-12 || (&h.base - p).amax() > 1e-12 {
        return Err(Error::arg("γ direction and h must be based at p"));
    }
    if r_list.is_empty() || r_list.iter().any(|r| !(*r > 0.0)) || r_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::arg("r_list must be positive and strictly decreasing"));
    }
    if !(dt_factor > 0.0) {
        return Err(Error::arg("dt factor must be positive"));
    }
    let mut ratios = Vec::with_capacity(r_list.len());
    let mut central = Vec::with_capacity(r_list.len());
    let mut dts = Vec::with_capacity(r_list.len());
    let mut failures = Vec::new();
    for &r in r_list {
        let dt = dt_factor * r * r;
        dts.push(dt);
        let run = || -> Result<(f64, f64)> {
            let here = moved(m, p, &gamma_dir.components, &h.components, 0.0)?;
            let ahead = moved(m, p, &gamma_dir.components, &h.components, dt)?;
            let behind = moved(m, p, &gamma_dir.components, &h.components, -dt)?;
            Ok((
                ratio(m, p, &here, &ahead, dt, r)?,
                ratio(m, p, &behind, &ahead, 2.0 * dt, r)?,
            ))
        };
        match run() {
            Ok((f, c)) => {
                ratios.push(Some(f));
                central.push(Some(c));
            }
            Err(e) => {
                failures.push(format!("r = {r}: {e}"));
                ratios.push(None);
                central.push(None);
            }
        }
    }
    let factors = ratios
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        })
        .collect();
    Ok(MainLemmaReport {
        r_list: r_list.to_vec(),
        dt_list: dts,
        ratios,
        central_ratios: central,
        factors,
        failures,
    })
}
