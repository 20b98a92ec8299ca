use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{metric_norm, random_point, seeded, MapOracle};
use crate::error::{Error, Result};
use crate::geometry::{
    exp_with_steps, orthonormal_frame, to_frame_coords, transport_frames_along, ChartManifold, Curve, DomainBox,
    Point, TangentVector,
};
use crate::holonomy::{sample_holonomy, HolonomySample};
use crate::linalg::{random_unit, subspace_distance, sym_eigen};
use crate::norms::{invariance_residual, NormField, SphereGrid};

const START_CANDIDATES: usize = 3;
const MIN_STEP: f64 = 1e-13;
const MAX_EVALS: usize = 6000;
const DECOMPOSITION_BASEPOINTS: usize = 3;
const KERNEL_DIRS: usize = 162;
const HOLONOMY_LOOPS: usize = 6;

/// Zero set of `|·|^f` at one point.
#[derive(Clone, Debug)]
pub struct KernelReport {
    pub dim: usize,
    pub eps: f64,
    /// Largest grid value of `|u|^f` over unit directions.
    pub max_value: f64,
    /// Orthonormal kernel basis in frame coordinates (columns).
    pub frame_basis: DMatrix<f64>,
    /// The same basis as chart vectors; `g`-orthonormal.
    pub basis: DMatrix<f64>,
    /// `|b|^f` for each basis column.
    pub values: Vec<f64>,
}

/// Orthonormal basis of the orthogonal complement of the columns of `b` in `R^d`.
fn complement(b: &[DVector<f64>], d: usize) -> DMatrix<f64> {
    let mut p = DMatrix::<f64>::identity(d, d);
    for v in b {
        p -= v * v.transpose();
    }
    let (vals, vecs) = sym_eigen(&p);
    let keep: Vec<usize> = (0..d).filter(|&i| vals[i] > 0.5).collect();
    DMatrix::from_fn(d, keep.len(), |r, c| vecs[(r, keep[c])])
}

/// Pattern search for the minimum of `q` on the unit sphere of `R^n`, from `y`.
///
/// Gives up once `q` cannot drop to `eps` within a few steps, using the
/// Lipschitz bound `|q(u) − q(w)| ≤ lip·|u − w|` of a semi-norm.
fn refine(q: &dyn Fn(&DVector<f64>) -> f64, y: DVector<f64>, start_step: f64, eps: f64, lip: f64) -> (DVector<f64>, f64) {
    let n = y.len();
    let mut y = y;
    let mut best = q(&y);
    if n < 2 {
        return (y, best);
    }
    let mut step = start_step;
    let mut evals = 0;
    while step > MIN_STEP && evals < MAX_EVALS && best > 0.0 {
        let tangent = complement(std::slice::from_ref(&y), n);
        let mut dirs: Vec<DVector<f64>> = Vec::new();
        for i in 0..tangent.ncols() {
            let ti = tangent.column(i).into_owned();
            dirs.push(ti.clone());
            dirs.push(-&ti);
            for j in i + 1..tangent.ncols() {
                let tj = tangent.column(j).into_owned();
                for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    dirs.push((&ti * a + &tj * b) / 2f64.sqrt());
                }
            }
        }
        let mut moved = false;
        for dir in &dirs {
            let cand = (&y + dir * step).normalize();
            evals += 1;
            let val = q(&cand);
            if val < best {
                y = cand;
                best = val;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
            if best - 4.0 * lip * step > eps {
                break;
            }
        }
    }
    (y, best)
}

/// Kernel `{v : |v|^f ≤ eps}` of the metric differential at `p`, built one
/// direction at a time from grid minima on successive orthogonal complements.
///
/// `eps` defaults to `1e-3` times the largest grid value; a map with vanishing
/// differential returns the whole tangent space.
pub fn kernel_distribution(o: &MapOracle, p: &Point, n_dirs: usize, eps: Option<f64>) -> Result<KernelReport> {
    let m = o.source();
    let d = m.dim();
    let frame = orthonormal_frame(m, p.as_slice())?;
    let q = |u: &DVector<f64>| -> f64 {
        metric_norm(o, &TangentVector::new(p.clone(), &frame * u)).unwrap_or(f64::INFINITY)
    };
    let grid = SphereGrid::new(d, n_dirs);
    let values: Vec<f64> = grid
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|u| q(&DVector::from_column_slice(u)))
        .collect();
    let max_value = values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    if max_value <= 1e-12 {
        return Ok(KernelReport {
            dim: d,
            eps: eps.unwrap_or(0.0),
            max_value,
            frame_basis: DMatrix::identity(d, d),
            basis: frame,
            values: vec![0.0; d],
        });
    }
    let eps = eps.unwrap_or(1e-3 * max_value);

    let mut found: Vec<DVector<f64>> = Vec::new();
    let mut found_values = Vec::new();
    while found.len() < d {
        let w = complement(&found, d);
        let k = w.ncols();
        let (y, val) = if k == 1 {
            let y = DVector::from_element(1, 1.0);
            let v = q(&(&w * &y));
            (y, v)
        } else {
            let sub = SphereGrid::new(k, n_dirs);
            let qw = |y: &DVector<f64>| q(&(&w * y));
            let mut scored: Vec<(usize, f64)> = if found.is_empty() {
                values.iter().copied().enumerate().collect()
            } else {
                sub.iter()
                    .collect::<Vec<_>>()
                    .par_iter()
                    .map(|y| qw(&DVector::from_column_slice(y)))
                    .collect::<Vec<f64>>()
                    .into_iter()
                    .enumerate()
                    .collect()
            };
            scored.sort_by(|a, b| a.1.total_cmp(&b.1));
            let start_grid = if found.is_empty() { &grid } else { &sub };
            let step = start_grid.spacing();
            let mut best: Option<(DVector<f64>, f64)> = None;
            for (i, _) in scored.iter().take(START_CANDIDATES) {
                let cand = refine(&qw, DVector::from_column_slice(start_grid.point(*i)), step, eps, max_value);
                let done = cand.1 <= eps;
                if best.as_ref().map_or(true, |b| cand.1 < b.1) {
                    best = Some(cand);
                }
                if done {
                    break;
                }
            }
            best.expect("grid is not empty")
        };
        if val > eps {
            break;
        }
        let mut u = &w * y;
        for b in &found {
            u -= b * b.dot(&u);
        }
        found.push(u.normalize());
        found_values.push(val);
    }
    let frame_basis = if found.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&found)
    };
    Ok(KernelReport {
        dim: found.len(),
        eps,
        max_value,
        basis: &frame * &frame_basis,
        frame_basis,
        values: found_values,
    })
}

/// Largest principal angle between the kernel at `γ(0)` transported along `γ`
/// and the kernel computed at `n_t` nodes of `γ`.
pub fn kernel_parallelism(o: &MapOracle, gamma: &Curve, n_t: usize, n_dirs: usize) -> Result<f64> {
    let m = o.source();
    if n_t < 2 {
        return Err(Error::arg("n_t must be at least 2"));
    }
    let start = kernel_distribution(o, &gamma.start().point, n_dirs, None)?;
    if start.dim == 0 {
        let nodes = gamma.nodes();
        let last = nodes.len() - 1;
        let mut worst: f64 = 0.0;
        for i in 0..n_t {
            let node = &nodes[i * last / (n_t - 1)];
            if kernel_distribution(o, &node.point, n_dirs, None)?.dim != 0 {
                worst = std::f64::consts::FRAC_PI_2;
            }
        }
        return Ok(worst);
    }
    let moved = transport_frames_along(m, gamma, &start.basis)?;
    let nodes = gamma.nodes();
    let last = nodes.len() - 1;
    let picks: Vec<usize> = (0..n_t).map(|i| i * last / (n_t - 1)).collect();
    let angles = picks
        .par_iter()
        .map(|&i| {
            let x = &nodes[i].point;
            let here = kernel_distribution(o, x, n_dirs, None)?;
            let cols = (0..moved[i].ncols())
                .map(|c| to_frame_coords(m, x.as_slice(), &moved[i].column(c).into_owned()))
                .collect::<Result<Vec<_>>>()?;
            let t = DMatrix::from_columns(&cols);
            // Orthonormalize away transport drift before comparing spans.
            let t = t.qr().q();
            Ok(subspace_distance(&t, &here.frame_basis))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(angles.into_iter().fold(0.0, f64::max))
}

/// Declared factors of `f = f_i ∘ f_a ∘ f_p`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Submersion onto `quotient`; its labels are quotient chart coordinates.
    pub f_p: MapOracle,
    pub quotient: Arc<ChartManifold>,
    /// Norm on quotient tangent spaces, in orthonormal frame coordinates.
    pub f_a: NormField,
    /// Map out of the quotient.
    pub f_i: MapOracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub checks: Vec<DecompositionCheck>,
    pub failures: Vec<String>,
    pub passed: bool,
}

impl DecompositionReport {
    pub fn check(&self, name: &str) -> Option<&DecompositionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks the declared factors against `o`:
/// (a) kernels of `o` and `f_p` agree (largest principal angle);
/// (b) `f_a` is invariant under sampled quotient holonomy;
/// (c) `f_i` has metric differential `f_a` on short quotient segments;
/// (d) composite distances match `o` on sampled pairs.
pub fn verify_decomposition(
    o: &MapOracle,
    decl: &Decomposition,
    region: &DomainBox,
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<DecompositionReport> {
    let m = o.source();
    let quotient = decl.quotient.as_ref();
    if decl.f_a.dim() != quotient.dim() || decl.f_i.source().dim() != quotient.dim() {
        return Err(Error::arg("declared factors do not match the quotient dimension"));
    }
    if n_samples == 0 {
        return Err(Error::arg("n_samples must be positive"));
    }
    let mut rng = seeded(seed);
    let points: Vec<Point> = (0..n_samples.max(DECOMPOSITION_BASEPOINTS))
        .map(|_| random_point(&mut rng, &region.lower, &region.upper))
        .collect();

    let mut angle: f64 = 0.0;
    for p in points.iter().take(DECOMPOSITION_BASEPOINTS) {
        let ko = kernel_distribution(o, p, KERNEL_DIRS, None)?;
        let kp = kernel_distribution(&decl.f_p, p, KERNEL_DIRS, None)?;
        angle = angle.max(subspace_distance(&ko.frame_basis, &kp.frame_basis));
    }

    let holonomy = if quotient.dim() < 2 {
        HolonomySample::from_matrices(vec![DMatrix::identity(quotient.dim(), quotient.dim())])
    } else {
        let base = decl.f_p.image(points[0].as_slice());
        sample_holonomy(
            quotient,
            &DVector::from_vec(base),
            HOLONOMY_LOOPS,
            0.2 * quotient.convexity_radius(),
            seed,
        )?
    };
    let invariance = invariance_residual(&decl.f_a, &holonomy)?;

    let ell = 0.05 * quotient.convexity_radius();
    let mut isometry: f64 = 0.0;
    for p in &points {
        let x = DVector::from_vec(decl.f_p.image(p.as_slice()));
        let u = random_unit(&mut rng, quotient.dim());
        let w = orthonormal_frame(quotient, x.as_slice())? * &u;
        let z = exp_with_steps(quotient, &x, &(w * ell), quotient.steps())?;
        let expect = ell * decl.f_a.eval(u.as_slice());
        let got = decl.f_i.distance(x.as_slice(), z.as_slice());
        isometry = isometry.max(if expect > 0.0 { (got - expect).abs() / expect } else { got });
    }

    let mut composite: f64 = 0.0;
    for p in &points {
        let u = random_unit(&mut rng, m.dim());
        let w = orthonormal_frame(m, p.as_slice())? * u;
        let len = rng.gen_range(0.1..=0.5) * m.convexity_radius();
        let z = exp_with_steps(m, p, &(w * len), m.steps())?;
        let direct = o.distance(p.as_slice(), z.as_slice());
        let via = decl.f_i.distance(&decl.f_p.image(p.as_slice()), &decl.f_p.image(z.as_slice()));
        composite = composite.max(if direct > 0.0 { (direct - via).abs() / direct } else { via });
    }

    let checks: Vec<DecompositionCheck> = [
        ("a_kernel_angle", angle),
        ("b_invariance", invariance),
        ("c_local_isometry", isometry),
        ("d_composite", composite),
    ]
    .into_iter()
    .map(|(name, residual)| DecompositionCheck {
        name: name.into(),
        residual,
        tolerance: tol,
        passed: residual <= tol,
    })
    .collect();
    let failures: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {:.3e} > {:.1e}", c.name, c.residual, c.tolerance))
        .collect();
    Ok(DecompositionReport {
        passed: failures.is_empty(),
        checks,
        failures,
    })
}
