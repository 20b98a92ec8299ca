//! Fixed-step RK4 integration of the geodesic and parallel-transport equations.

use nalgebra::{DMatrix, DVector};

use super::curve::{Curve, CurveKind, CurveNode};
use super::manifold::{ChartManifold, Christoffel, ChristoffelMode, MetricTensor};
use super::{Point, TangentVector};
use crate::error::{Error, Result};

/// Levi-Civita Christoffel symbols at `x`.
pub fn christoffel(m: &ChartManifold, x: &[f64]) -> Result<Christoffel> {
    m.check_domain(x)?;
    Ok(christoffel_unchecked(m, x))
}

pub(crate) fn christoffel_unchecked(m: &ChartManifold, x: &[f64]) -> Christoffel {
    match m.christoffel_mode() {
        ChristoffelMode::Analytic => m
            .metric_tensor()
            .christoffel(x)
            .unwrap_or_else(|| finite_difference_christoffel(m.metric_tensor().as_ref(), x, 1e-5)),
        ChristoffelMode::FiniteDifference { h } => {
            finite_difference_christoffel(m.metric_tensor().as_ref(), x, h)
        }
    }
}

/// Central-difference Christoffels:
/// `Γ^k_ij = ½ g^{kl} (∂_i g_jl + ∂_j g_il − ∂_l g_ij)`.
pub fn finite_difference_christoffel(metric: &dyn MetricTensor, x: &[f64], h: f64) -> Christoffel {
    let d = metric.dim();
    let mut xp = x.to_vec();
    let dg: Vec<DMatrix<f64>> = (0..d)
        .map(|l| {
            xp[l] = x[l] + h;
            let gp = metric.metric(&xp);
            xp[l] = x[l] - h;
            let gm = metric.metric(&xp);
            xp[l] = x[l];
            (gp - gm) / (2.0 * h)
        })
        .collect();
    let ginv = metric
        .metric(x)
        .try_inverse()
        .expect("metric must be invertible");
    let mut gamma = Christoffel::zeros(d);
    for k in 0..d {
        for i in 0..d {
            for j in i..d {
                let mut acc = 0.0;
                for l in 0..d {
                    acc += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                gamma.set_sym(k, i, j, 0.5 * acc);
            }
        }
    }
    gamma
}

#[inline]
fn accel(gamma: &Christoffel, v: &DVector<f64>) -> DVector<f64> {
    -gamma.contract(v.as_slice(), v.as_slice())
}

fn stage_gamma(m: &ChartManifold, x: &DVector<f64>, t: f64) -> Result<Christoffel> {
    if m.contains(x.as_slice()) {
        Ok(christoffel_unchecked(m, x.as_slice()))
    } else {
        Err(Error::Truncated {
            last_t: t,
            point: x.as_slice().to_vec(),
        })
    }
}

/// One RK4 step of the geodesic equation, optionally carrying vectors (columns of
/// `carried`) by parallel transport. `t` is only used for error reporting.
fn rk4_step(
    m: &ChartManifold,
    x: &DVector<f64>,
    v: &DVector<f64>,
    carried: Option<&DMatrix<f64>>,
    dt: f64,
    t: f64,
) -> Result<(DVector<f64>, DVector<f64>, Option<DMatrix<f64>>)> {
    let transport = |gamma: &Christoffel, vel: &DVector<f64>, w: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(w.nrows(), w.ncols());
        for c in 0..w.ncols() {
            let col = w.column(c).into_owned();
            out.set_column(c, &(-gamma.contract(vel.as_slice(), col.as_slice())));
        }
        out
    };

    let g1 = stage_gamma(m, x, t)?;
    let (k1x, k1v) = (v.clone(), accel(&g1, v));
    let k1w = carried.map(|w| transport(&g1, v, w));

    let x2 = x + &k1x * (0.5 * dt);
    let v2 = v + &k1v * (0.5 * dt);
    let g2 = stage_gamma(m, &x2, t)?;
    let (k2x, k2v) = (v2.clone(), accel(&g2, &v2));
    let k2w = carried.map(|w| transport(&g2, &v2, &(w + k1w.as_ref().unwrap() * (0.5 * dt))));

    let x3 = x + &k2x * (0.5 * dt);
    let v3 = v + &k2v * (0.5 * dt);
    let g3 = stage_gamma(m, &x3, t)?;
    let (k3x, k3v) = (v3.clone(), accel(&g3, &v3));
    let k3w = carried.map(|w| transport(&g3, &v3, &(w + k2w.as_ref().unwrap() * (0.5 * dt))));

    let x4 = x + &k3x * dt;
    let v4 = v + &k3v * dt;
    let g4 = stage_gamma(m, &x4, t)?;
    let (k4x, k4v) = (v4.clone(), accel(&g4, &v4));
    let k4w = carried.map(|w| transport(&g4, &v4, &(w + k3w.as_ref().unwrap() * dt)));

    let s = dt / 6.0;
    let xn = x + (k1x + &k2x * 2.0 + &k3x * 2.0 + k4x) * s;
    let vn = v + (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * s;
    let wn = carried.map(|w| {
        w + (k1w.unwrap() + k2w.unwrap() * 2.0 + k3w.unwrap() * 2.0 + k4w.unwrap()) * s
    });
    if !m.contains(xn.as_slice()) {
        return Err(Error::Truncated {
            last_t: t,
            point: xn.as_slice().to_vec(),
        });
    }
    Ok((xn, vn, wn))
}

fn check_steps(steps: usize) -> Result<()> {
    if steps < 16 {
        Err(Error::arg("geodesic integration needs at least 16 steps"))
    } else {
        Ok(())
    }
}

/// Integrates the geodesic with initial velocity `v` over `[0, t_end]`.
pub fn integrate_geodesic(
    m: &ChartManifold,
    v: &TangentVector,
    t_end: f64,
    steps: usize,
) -> Result<Curve> {
    check_steps(steps)?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::arg("t_end must be positive and finite"));
    }
    v.check_dim(m)?;
    m.check_domain(v.base.as_slice())?;
    let dt = t_end / steps as f64;
    let mut x = v.base.clone();
    let mut vel = v.components.clone();
    let mut nodes = Vec::with_capacity(steps + 1);
    nodes.push(CurveNode {
        t: 0.0,
        point: x.clone(),
        velocity: vel.clone(),
    });
    for i in 0..steps {
        let t = i as f64 * dt;
        let (xn, vn, _) = rk4_step(m, &x, &vel, None, dt, t)?;
        x = xn;
        vel = vn;
        nodes.push(CurveNode {
            t: if i + 1 == steps { t_end } else { t + dt },
            point: x.clone(),
            velocity: vel.clone(),
        });
    }
    Curve::new(nodes, CurveKind::Geodesic)
}

/// Endpoint of the geodesic `t ↦ exp(t v)` at `t = 1`, without recording nodes.
pub fn exp_with_steps(m: &ChartManifold, base: &Point, v: &DVector<f64>, steps: usize) -> Result<Point> {
    m.check_domain(base.as_slice())?;
    let dt = 1.0 / steps as f64;
    let mut x = base.clone();
    let mut vel = v.clone();
    for i in 0..steps {
        let (xn, vn, _) = rk4_step(m, &x, &vel, None, dt, i as f64 * dt)?;
        x = xn;
        vel = vn;
    }
    Ok(x)
}

/// Riemannian exponential using the manifold's default step count.
pub fn exp(m: &ChartManifold, v: &TangentVector) -> Result<Point> {
    v.check_dim(m)?;
    exp_with_steps(m, &v.base, &v.components, m.steps())
}

fn hermite(p0: &DVector<f64>, v0: &DVector<f64>, p1: &DVector<f64>, v1: &DVector<f64>, h: f64, s: f64)
    -> (DVector<f64>, DVector<f64>) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let pos = p0 * h00 + v0 * (h10 * h) + p1 * h01 + v1 * (h11 * h);
    let d00 = 6.0 * s2 - 6.0 * s;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = -6.0 * s2 + 6.0 * s;
    let d11 = 3.0 * s2 - 2.0 * s;
    let vel = p0 * (d00 / h) + v0 * d10 + p1 * (d01 / h) + v1 * d11;
    (pos, vel)
}

/// Parallel transport of the columns of `w` along `c`; returns the transported
/// matrix at every node.
pub fn transport_frames_along(m: &ChartManifold, c: &Curve, w: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    if w.nrows() != c.dim() || c.dim() != m.dim() {
        return Err(Error::arg("transported vectors do not match the curve dimension"));
    }
    let nodes = c.nodes();
    let mut out = Vec::with_capacity(nodes.len());
    let mut cur = w.clone();
    out.push(cur.clone());
    for pair in nodes.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let h = b.t - a.t;
        cur = match c.kind() {
            CurveKind::Geodesic | CurveKind::Polygon => {
                let (_, _, wn) = rk4_step(m, &a.point, &a.velocity, Some(&cur), h, a.t)?;
                wn.expect("carried vectors")
            }
            CurveKind::Generic => {
                let rhs = |x: &DVector<f64>, xdot: &DVector<f64>, w: &DMatrix<f64>| -> Result<DMatrix<f64>> {
                    let gamma = stage_gamma(m, x, a.t)?;
                    let mut d = DMatrix::zeros(w.nrows(), w.ncols());
                    for col in 0..w.ncols() {
                        let wc = w.column(col).into_owned();
                        d.set_column(col, &(-gamma.contract(xdot.as_slice(), wc.as_slice())));
                    }
                    Ok(d)
                };
                let (xm, vm) = hermite(&a.point, &a.velocity, &b.point, &b.velocity, h, 0.5);
                let k1 = rhs(&a.point, &a.velocity, &cur)?;
                let k2 = rhs(&xm, &vm, &(&cur + &k1 * (0.5 * h)))?;
                let k3 = rhs(&xm, &vm, &(&cur + &k2 * (0.5 * h)))?;
                let k4 = rhs(&b.point, &b.velocity, &(&cur + &k3 * h))?;
                &cur + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
            }
        };
        out.push(cur.clone());
    }
    Ok(out)
}

fn check_base(c: &Curve, v: &TangentVector) -> Result<()> {
    let start = &c.start().point;
    if v.base.len() != start.len() || (&v.base - start).amax() > 1e-9 * (1.0 + start.amax()) {
        return Err(Error::arg("vector is not based at the start of the curve"));
    }
    Ok(())
}

/// Parallel transports `v` along `c`, returning the vector at every node.
pub fn transport_along(m: &ChartManifold, c: &Curve, v: &TangentVector) -> Result<Vec<TangentVector>> {
    check_base(c, v)?;
    let w = DMatrix::from_column_slice(v.components.len(), 1, v.components.as_slice());
    let frames = transport_frames_along(m, c, &w)?;
    Ok(frames
        .into_iter()
        .zip(c.nodes())
        .map(|(f, n)| TangentVector::new(n.point.clone(), f.column(0).into_owned()))
        .collect())
}

/// Parallel transport of `v` to the end of `c`.
pub fn parallel_transport(m: &ChartManifold, c: &Curve, v: &TangentVector) -> Result<TangentVector> {
    Ok(transport_along(m, c, v)?.pop().expect("curve has nodes"))
}

/// Largest relative deviation of the Riemannian speed from its initial value.
pub fn speed_drift(m: &ChartManifold, c: &Curve) -> Result<f64> {
    let speeds: Vec<f64> = c
        .nodes()
        .iter()
        .map(|n| m.norm_at(n.point.as_slice(), &n.velocity))
        .collect::<Result<_>>()?;
    let s0 = speeds[0];
    let worst = speeds.iter().map(|s| (s - s0).abs()).fold(0.0, f64::max);
    Ok(if s0 > 0.0 { worst / s0 } else { worst })
}
