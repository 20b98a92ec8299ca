use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::SphereGrid;
use super::{euclid, NormField, NormKind};
use crate::error::{Error, Result};
use crate::linalg::{random_unit, sym_eigen};

const RADIAL_NODES: usize = 8;
const SIMPSON_TOL: f64 = 1e-13;
const SIMPSON_DEPTH: usize = 40;
const PROBE_SEED: u64 = 0x4e55_1a4;
/// Second differences that agree across two step sizes to this relative level
/// count as smooth.
pub const SMOOTH_TOL: f64 = 1e-2;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "at least one node");
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                // Recurrence leaves P_n in p1 and P_{n-1} in p0.
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

fn bump(rho: f64, eps: f64) -> f64 {
    let s = rho / eps;
    let b = 1.0 - s * s;
    b * b
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, SIMPSON_DEPTH)
}

/// Unit vectors orthogonal to `u`: a Householder image of a grid on the sphere of
/// one dimension less.
fn ring(u: &DVector<f64>, ring_grid: &SphereGrid) -> Vec<DVector<f64>> {
    let d = u.len();
    // Householder reflection H with H e_d = u.
    let mut w = u.clone();
    w[d - 1] -= 1.0;
    let wn = w.norm_squared();
    ring_grid
        .iter()
        .map(|p| {
            let mut x = DVector::zeros(d);
            x.rows_mut(0, d - 1).copy_from_slice(p);
            if wn > 1e-30 {
                let f = 2.0 * w.dot(&x) / wn;
                x -= &w * f;
            }
            x
        })
        .collect()
}

/// Average of `q` over the spherical cap of radius `eps` around the direction
/// of `v`, weighted by the bump `(1 − (ρ/eps)²)²`, times `|v|`.
fn cap_average(q: &NormField, v: &[f64], eps: f64, ring_grid: Option<&SphereGrid>, nodes: &[(f64, f64)]) -> f64 {
    let r = euclid(v);
    if r == 0.0 {
        return 0.0;
    }
    let u = DVector::from_column_slice(v) / r;
    let d = u.len();
    if d == 1 {
        return q.eval(v);
    }
    if d == 2 {
        // Exact rotations; the bump integral is ∫ bump = 16 eps / 15.
        let f = |rho: f64| {
            let (s, c) = rho.sin_cos();
            let x = [c * u[0] - s * u[1], s * u[0] + c * u[1]];
            bump(rho, eps) * q.eval(&x)
        };
        let scale = q.eval(u.as_slice()).max(1e-300);
        let total = simpson(&f, -eps, eps, SIMPSON_TOL * scale * eps);
        return r * total / (16.0 * eps / 15.0);
    }
    let dirs = ring(&u, ring_grid.expect("ring grid for dim ≥ 3"));
    let mut num = 0.0;
    let mut den = 0.0;
    for &(x, w) in nodes {
        let rho = 0.5 * eps * (x + 1.0);
        let weight = 0.5 * eps * w * bump(rho, eps) * rho.sin().powi(d as i32 - 2);
        let (s, c) = rho.sin_cos();
        let mut acc = 0.0;
        for dir in &dirs {
            let p = &u * c + dir * s;
            acc += q.eval(p.as_slice());
        }
        num += weight * acc / dirs.len() as f64;
        den += weight;
    }
    r * num / den
}

/// A smoothed norm together with its distance to the input.
#[derive(Clone, Debug)]
pub struct SmoothedNorm {
    pub norm: NormField,
    pub eps: f64,
    pub distance_to_input: f64,
    /// Reported constant `C` in `distance ≤ C·eps`.
    pub constant: f64,
}

/// `sqrt((1 − eps)·q_moll² + eps·|v|²)` with `q_moll` the cap-averaged `q`.
pub fn minkowski_smooth(q: &NormField, eps: f64) -> Result<SmoothedNorm> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::arg("smoothing eps must lie in (0, 1)"));
    }
    if q.kind() == NormKind::Seminorm {
        return Err(Error::Seminorm);
    }
    let d = q.dim();
    let ring_grid = match d {
        0..=2 => None,
        3 => Some(SphereGrid::new(2, 24)),
        _ => Some(SphereGrid::new(d - 1, 162)),
    };
    let nodes = gauss_legendre(RADIAL_NODES);
    let inner = q.clone();
    let f = move |v: &[f64]| {
        let m = cap_average(&inner, v, eps, ring_grid.as_ref(), &nodes);
        let e = euclid(v);
        ((1.0 - eps) * m * m + eps * e * e).sqrt()
    };
    let norm = NormField::with_grid(
        d,
        NormKind::MinkowskiCandidate,
        Arc::clone(q.grid_arc()),
        Arc::new(f),
    )
    .with_label(format!("smooth({}, {eps})", q.label()));
    let distance = super::norm_distance(&norm, q)?;
    Ok(SmoothedNorm {
        constant: distance / eps,
        distance_to_input: distance,
        eps,
        norm,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinkowskiReport {
    /// `max ‖H_h − H_{2h}‖ / max(1, ‖H_h‖)` over probes (max-entry norms).
    pub smooth_residual: f64,
    /// Smallest eigenvalue of the Hessian of `q²/2` over probes.
    pub hessian_min_eigen: f64,
    /// Relative disagreement of that eigenvalue between the two step sizes.
    pub delta: f64,
    pub probes: usize,
    pub smooth: bool,
}

fn hessian(q: &NormField, u: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let d = u.len();
    let f = |x: &DVector<f64>| {
        let v = q.eval(x.as_slice());
        0.5 * v * v
    };
    let e = |i: usize| {
        let mut x = DVector::zeros(d);
        x[i] = h;
        x
    };
    let mut hm = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let (ei, ej) = (e(i), e(j));
            let val = (f(&(u + &ei + &ej)) - f(&(u + &ei - &ej)) - f(&(u - &ei + &ej)) + f(&(u - &ei - &ej)))
                / (4.0 * h * h);
            hm[(i, j)] = val;
            hm[(j, i)] = val;
        }
    }
    hm
}

/// Finite-difference Hessian diagnostics of `q²/2` at `n_probe` seeded unit vectors.
pub fn minkowski_check(q: &NormField, n_probe: usize) -> MinkowskiReport {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let probes: Vec<DVector<f64>> = (0..n_probe.max(1)).map(|_| random_unit(&mut rng, q.dim())).collect();
    minkowski_check_at(q, &probes)
}

pub fn minkowski_check_at(q: &NormField, probes: &[DVector<f64>]) -> MinkowskiReport {
    const H: f64 = 1e-3;
    let mut residual: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut delta: f64 = 0.0;
    for u in probes {
        let u = u / u.norm();
        let h1 = hessian(q, &u, H);
        let h2 = hessian(q, &u, 2.0 * H);
        residual = residual.max((&h1 - &h2).amax() / h1.amax().max(1.0));
        let l1 = sym_eigen(&h1).0[0];
        let l2 = sym_eigen(&h2).0[0];
        min_eig = min_eig.min(l1);
        delta = delta.max((l1 - l2).abs() / l1.abs().max(1e-12));
    }
    MinkowskiReport {
        smooth_residual: residual,
        hessian_min_eigen: min_eig,
        delta,
        probes: probes.len(),
        smooth: residual <= SMOOTH_TOL && min_eig > 0.0,
    }
}
