use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    metric_norm, random_point, seeded, AffineVerdict, AffinityReport,
    MapOracle, SampleInfo,
};
use crate::error::{Error, Result};
use crate::geometry::{
    exp_with_steps, integrate_geodesic, orthonormal_frame, transport_along, ChartManifold, Curve, DomainBox,
    Point, TangentVector,
};
use crate::linalg::random_unit;
use crate::norms::{NormField, NormKind, SphereGrid};

/// Limits at or below this count as regular.
pub const REGULAR_TOL: f64 = 1e-3;
const SEMINORM_SEED: u64 = 0x5e11_0a11;
const PARALLEL_NODES: usize = 8;
const STATS_BASEPOINTS: usize = 3;
const STATS_PAIRS: usize = 8;
const KERNEL_DIRS: usize = 162;
const SEGMENT_PARAMS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn check_region(m: &ChartManifold, region: &DomainBox) -> Result<()> {
    if region.dim() != m.dim() || !m.contains(&region.lower) || !m.contains(&region.upper) {
        return Err(Error::arg("region must lie inside the chart domain"));
    }
    Ok(())
}

/// A `g`-unit chart vector at `x` in a uniformly random direction.
fn random_direction<R: Rng + ?Sized>(rng: &mut R, m: &ChartManifold, x: &Point) -> Result<DVector<f64>> {
    Ok(orthonormal_frame(m, x.as_slice())? * random_unit(rng, m.dim()))
}

fn is_chart_exit(e: &Error) -> bool {
    matches!(e, Error::Truncated { .. } | Error::Domain { .. })
}

/// Defects of one geodesic segment of length `length` from `x` along the unit vector `w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentDefect {
    /// `max(|d(x,m) − d(m,z)|, |d(x,z) − d(x,m) − d(m,z)|) / d(x,z)`.
    pub midpoint: f64,
    /// `max |d(γ(s),γ(t)) − |s−t|·d(x,z)| / d(x,z)` over the sampled parameters.
    pub linear: f64,
    /// `d(x,z) / length`.
    pub constant: f64,
    pub image_length: f64,
}

/// `None` when the image of the segment is a point.
pub fn segment_defect(o: &MapOracle, x: &Point, w: &DVector<f64>, length: f64) -> Result<Option<SegmentDefect>> {
    let m = o.source();
    let pts = SEGMENT_PARAMS
        .iter()
        .map(|s| {
            if *s == 0.0 {
                m.check_domain(x.as_slice()).map(|_| x.clone())
            } else {
                exp_with_steps(m, x, &(w * (s * length)), m.steps())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let imgs: Vec<Vec<f64>> = pts.iter().map(|p| o.image(p.as_slice())).collect();
    let d = |i: usize, j: usize| o.label_distance(&imgs[i], &imgs[j]);
    let total = d(0, 4);
    let scale = imgs[0].iter().map(|v| v.abs()).fold(1.0, f64::max);
    if total <= 1e-12 * scale {
        return Ok(None);
    }
    let (a, b) = (d(0, 2), d(2, 4));
    let midpoint = (a - b).abs().max((total - a - b).abs()) / total;
    let mut linear: f64 = 0.0;
    for i in 0..SEGMENT_PARAMS.len() {
        for j in i + 1..SEGMENT_PARAMS.len() {
            let expect = (SEGMENT_PARAMS[j] - SEGMENT_PARAMS[i]) * total;
            linear = linear.max((d(i, j) - expect).abs() / total);
        }
    }
    Ok(Some(SegmentDefect {
        midpoint,
        linear,
        constant: total / length,
        image_length: total,
    }))
}

/// Midpoint and linear-parametrization defects over random geodesic segments in `region`.
pub fn affinity_test(o: &MapOracle, region: &DomainBox, n_geodesics: usize, seed: u64) -> Result<AffinityReport> {
    let m = o.source();
    check_region(m, region)?;
    if n_geodesics == 0 {
        return Err(Error::arg("n_geodesics must be positive"));
    }
    let scale = 0.5 * m.convexity_radius();
    let mut rng = seeded(seed);
    let mut segs = Vec::with_capacity(n_geodesics);
    for _ in 0..n_geodesics {
        let x = random_point(&mut rng, &region.lower, &region.upper);
        let w = random_direction(&mut rng, m, &x)?;
        let len = rng.gen_range(0.25 * scale..=scale);
        segs.push((x, w, len));
    }
    let results: Vec<Result<Option<SegmentDefect>>> =
        segs.par_iter().map(|(x, w, len)| segment_defect(o, x, w, *len)).collect();
    let (mut used, mut degenerate, mut skipped) = (0, 0, 0);
    let mut residual: f64 = 0.0;
    let mut constants = Vec::new();
    for r in results {
        match r {
            Ok(Some(s)) => {
                used += 1;
                residual = residual.max(s.midpoint).max(s.linear);
                constants.push(s.constant);
            }
            Ok(None) => degenerate += 1,
            Err(e) if is_chart_exit(&e) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if used + degenerate == 0 {
        return Err(Error::Sampling("every segment left the chart".into()));
    }
    Ok(AffinityReport {
        verdict: AffineVerdict::classify(&[residual]),
        linearity_residual: residual,
        seminorm_residual: None,
        parallel_residual: None,
        kernel_dims: Vec::new(),
        segment_constants: constants,
        samples: SampleInfo {
            seed,
            n_geodesics,
            used,
            degenerate,
            skipped,
            scale,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    /// Larger of the two defects below.
    pub residual: f64,
    /// `max(0, |u+v|^f − |u|^f − |v|^f)`.
    pub triangle: f64,
    /// `| |λu|^f − |λ|·|u|^f |`.
    pub homogeneity: f64,
    pub pairs: usize,
}

/// Subadditivity and homogeneity defects of `|·|^f` on `T_pM`.
pub fn seminorm_check(o: &MapOracle, p: &Point, n_pairs: usize) -> Result<SeminormReport> {
    let m = o.source();
    m.check_domain(p.as_slice())?;
    let mut rng = seeded(SEMINORM_SEED);
    let frame = orthonormal_frame(m, p.as_slice())?;
    let mut draws = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let u = &frame * random_unit(&mut rng, m.dim()) * rng.gen_range(0.2..=1.0);
        let v = &frame * random_unit(&mut rng, m.dim()) * rng.gen_range(0.2..=1.0);
        let lambda: f64 = rng.gen_range(-2.0..=2.0);
        draws.push((u, v, lambda));
    }
    let norm = |c: DVector<f64>| metric_norm(o, &TangentVector::new(p.clone(), c));
    let defects = draws
        .par_iter()
        .map(|(u, v, lambda)| {
            let nu = norm(u.clone())?;
            let nv = norm(v.clone())?;
            let nuv = norm(u + v)?;
            let nl = norm(u * *lambda)?;
            Ok(((nuv - nu - nv).max(0.0), (nl - lambda.abs() * nu).abs()))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let triangle = defects.iter().map(|d| d.0).fold(0.0, f64::max);
    let homogeneity = defects.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok(SeminormReport {
        residual: triangle.max(homogeneity),
        triangle,
        homogeneity,
        pairs: n_pairs,
    })
}

/// `max_t | |P_t v|^f − |v|^f | / |v|^f` over `n_t` nodes of `γ`; absolute when
/// `|v|^f` vanishes.
pub fn parallel_invariance_check(o: &MapOracle, gamma: &Curve, v: &TangentVector, n_t: usize) -> Result<f64> {
    let m = o.source();
    if n_t < 2 {
        return Err(Error::arg("n_t must be at least 2"));
    }
    let moved = transport_along(m, gamma, v)?;
    let last = moved.len() - 1;
    let picks: Vec<usize> = (0..n_t).map(|i| (i * last + (n_t - 1) / 2) / (n_t - 1)).collect();
    let values = picks
        .par_iter()
        .map(|&i| metric_norm(o, &moved[i]))
        .collect::<Result<Vec<f64>>>()?;
    let base = metric_norm(o, v)?;
    let speed = m.norm_at(v.base.as_slice(), &v.components)?;
    let worst = values.iter().map(|x| (x - base).abs()).fold(0.0, f64::max);
    Ok(if base > 1e-9 * speed.max(1e-300) { worst / base } else { worst })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParallelReport {
    pub residual: f64,
    pub geodesics: usize,
    pub per_geodesic: Vec<f64>,
    pub seed: u64,
}

/// [`parallel_invariance_check`] over random geodesics with random transported vectors.
pub fn parallel_invariance_suite(o: &MapOracle, region: &DomainBox, n_geodesics: usize, seed: u64) -> Result<ParallelReport> {
    let m = o.source();
    check_region(m, region)?;
    let scale = 0.5 * m.convexity_radius();
    let mut rng = seeded(seed);
    let mut draws = Vec::with_capacity(n_geodesics);
    for _ in 0..n_geodesics {
        let x = random_point(&mut rng, &region.lower, &region.upper);
        let dir = random_direction(&mut rng, m, &x)? * rng.gen_range(0.5 * scale..=scale);
        let v = random_direction(&mut rng, m, &x)?;
        draws.push((x, dir, v));
    }
    let per_geodesic = draws
        .par_iter()
        .map(|(x, dir, v)| {
            let gamma = integrate_geodesic(m, &TangentVector::new(x.clone(), dir.clone()), 1.0, m.steps())?;
            parallel_invariance_check(o, &gamma, &TangentVector::new(x.clone(), v.clone()), PARALLEL_NODES)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ParallelReport {
        residual: per_geodesic.iter().copied().fold(0.0, f64::max),
        geodesics: n_geodesics,
        per_geodesic,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub t_list: Vec<f64>,
    /// `(|h+tv|^f + |h−tv|^f − 2|h|^f) / t`.
    pub quotients: Vec<f64>,
    /// Linear extrapolation of the last two quotients to `t = 0`.
    pub limit: f64,
    pub regular: bool,
}

pub fn regular_vector_test(o: &MapOracle, h: &TangentVector, v: &TangentVector, t_list: &[f64]) -> Result<RegularityReport> {
    if (&h.base - &v.base).amax() > 1e-12 {
        return Err(Error::arg("h and v must share a base point"));
    }
    if t_list.len() < 2 || t_list.iter().any(|t| !(*t > 0.0)) || t_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::arg("t_list needs at least two positive decreasing values"));
    }
    let nh = metric_norm(o, h)?;
    if !(nh > 0.0) {
        return Err(Error::arg("|h|^f must be positive"));
    }
    let quotients = t_list
        .iter()
        .map(|&t| {
            let plus = metric_norm(o, &TangentVector::new(h.base.clone(), &h.components + &v.components * t))?;
            let minus = metric_norm(o, &TangentVector::new(h.base.clone(), &h.components - &v.components * t))?;
            Ok((plus + minus - 2.0 * nh) / t)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = t_list.len();
    let (t1, q1, t2, q2) = (t_list[n - 2], quotients[n - 2], t_list[n - 1], quotients[n - 1]);
    let limit = (t1 * q2 - t2 * q1) / (t1 - t2);
    Ok(RegularityReport {
        t_list: t_list.to_vec(),
        quotients,
        limit,
        regular: limit.abs() <= REGULAR_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomothetyReport {
    /// Mean of `|u|^f` over unit directions and basepoints.
    pub constant: f64,
    /// Largest deviation of a single ratio from the constant.
    pub spread: f64,
    pub basepoints: usize,
    /// Per-basepoint mean ratio.
    pub per_point: Vec<f64>,
}

/// Ratio `|u|^f / |u|_g` over a grid of `n_dirs` unit directions at each point.
pub fn homothety_constant(o: &MapOracle, points: &[Point], n_dirs: usize) -> Result<HomothetyReport> {
    let m = o.source();
    if points.is_empty() {
        return Err(Error::arg("need at least one basepoint"));
    }
    let grid = SphereGrid::new(m.dim(), n_dirs);
    let ratios = points
        .par_iter()
        .map(|p| {
            let frame = orthonormal_frame(m, p.as_slice())?;
            grid.iter()
                .map(|u| metric_norm(o, &TangentVector::new(p.clone(), &frame * DVector::from_column_slice(u))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let all: Vec<f64> = ratios.iter().flatten().copied().collect();
    let constant = all.iter().sum::<f64>() / all.len() as f64;
    Ok(HomothetyReport {
        constant,
        spread: all.iter().map(|r| (r - constant).abs()).fold(0.0, f64::max),
        basepoints: points.len(),
        per_point: ratios.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect(),
    })
}

/// `|·|^f` at `p` as a norm field on frame coordinates; values that cannot be
/// computed are NaN.
pub fn differential_field(o: &MapOracle, p: &Point, n_grid: usize) -> Result<NormField> {
    let m = o.source();
    let frame = orthonormal_frame(m, p.as_slice())?;
    let oracle = o.clone();
    let base = p.clone();
    let f = move |u: &[f64]| {
        let v = TangentVector::new(base.clone(), &frame * DVector::from_column_slice(u));
        metric_norm(&oracle, &v).unwrap_or(f64::NAN)
    };
    let grid = Arc::new(SphereGrid::new(m.dim(), n_grid));
    Ok(NormField::with_grid(m.dim(), NormKind::Norm, grid, Arc::new(f)).with_label(format!("|.|^f of {}", o.label())))
}

/// Linearity, semi-norm and parallel-invariance residuals together, with kernel
/// dimensions at the semi-norm basepoints.
pub fn assess_affinity(o: &MapOracle, region: &DomainBox, n_geodesics: usize, seed: u64) -> Result<AffinityReport> {
    let report = affinity_test(o, region, n_geodesics, seed)?;
    let mut rng = seeded(seed ^ SEMINORM_SEED);
    let points: Vec<Point> = (0..STATS_BASEPOINTS)
        .map(|_| random_point(&mut rng, &region.lower, &region.upper))
        .collect();
    let mut semi: f64 = 0.0;
    let mut dims = Vec::with_capacity(points.len());
    for p in &points {
        semi = semi.max(seminorm_check(o, p, STATS_PAIRS)?.residual);
        dims.push(super::kernel_distribution(o, p, KERNEL_DIRS, None)?.dim);
    }
    let parallel = parallel_invariance_suite(o, region, n_geodesics, seed)?.residual;
    Ok(report.with_seminorm(semi).with_parallel(parallel).with_kernel_dims(dims))
}
