use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, Vector3};
use serde_json::{json, Value};

use super::{Context, Outcome, Params, RunOptions, Scenario, SuiteEntry};
use crate::affine::{
    assess_affinity, dist, homothety_constant, kernel_parallelism, mainlemma_check,
    parallel_invariance_suite, random_point, regular_vector_test, seeded, seminorm_check, verify_decomposition,
    differential_field, AffineVerdict, AffinityReport, Decomposition, MapOracle, MAINLEMMA_DT_FACTOR,
};
use crate::error::{Error, Result};
use crate::geometry::{
    exp, integrate_geodesic, orthonormal_frame, parallel_transport, riemannian_log, ChartManifold, DomainBox, Point,
    TangentVector,
};
use crate::holonomy::{
    group_closure, invariant_subspaces, rotation_angle, sample_holonomy, transitivity_test, ElementOrigin,
    HolonomySample, HolonomySummary, SplittingReport, TransitivityReport, Verdict,
};
use crate::norms::{
    average_norm, block_sum_norm, distance_to_euclidean, extend_from_section, invariance_residual, minkowski_check,
    minkowski_smooth, norm_distance, orbit_hull_norm, restrict_norm_to_section, NormField,
};

pub(super) const CATALOG: &[(&str, &str)] = &[
    ("geodesic-oracles", "integrated sphere and hyperbolic geodesics against closed forms"),
    ("flat-linfty", "Euclidean plane with the admissible change to the l-infinity norm"),
    ("sphere-transitive", "round S2 holonomy: area law, transitive closure, averaged norms"),
    ("product-s2xr", "S2 x R: splitting, block l1 norm, projection to the line as a flat submersion"),
    ("product-s2xs2", "S2 x S2: two irreducible blocks, smoothed block norm, four-element section group"),
    ("sphere-homothety", "identity of S2 into the sphere of radius 2"),
    ("sphere-constant", "constant map out of S2"),
    ("mainlemma-sphere", "symmetric-difference ratios of shifted geodesics on S2"),
    ("mainlemma-hyperbolic", "symmetric-difference ratios of shifted geodesics on the hyperbolic plane"),
    ("regular-corners", "regular and corner directions of the l-infinity differential"),
    ("decomposition-r3-l1", "declared factorization of R3 -> (R2, l1)"),
    ("negative-controls", "sine-warp map, non-parallel norm oracle, triangle-violating distance"),
    ("sphere-sine-warp", "non-affine self-map of S2 with great-circle distance"),
];

const AFFINE_TOL: f64 = crate::affine::AFFINE_TOL;
const ORACLE_TOL: f64 = 1e-6;
const GAUSS_BONNET_TOL: f64 = 1e-3;
const COVERAGE_TOL: f64 = 0.1;
const AVERAGE_TOL: f64 = 0.02;
const INVARIANCE_TOL: f64 = 1e-3;
const NON_EUCLIDEAN: f64 = 0.1;
const NON_PARALLEL: f64 = 0.05;
const NOT_AFFINE_RESIDUAL: f64 = 1e-2;
const DECAY_BAND: (f64, f64) = (1.7, 2.3);
const MAINLEMMA_RADII: [f64; 4] = [0.4, 0.2, 0.1, 0.05];
const CORNER_LIMIT: f64 = 1.9;
const SMOOTH_LIMIT: f64 = 1e-3;
const DECOMPOSITION_TOL: f64 = 1e-8;
const MISMATCH_ANGLE: f64 = 1.0;
const MIN_GEODESICS: usize = 20;
const MIN_BASEPOINTS: usize = 10;
const MIN_DIRS: usize = 200;

pub(super) fn defaults(name: &str) -> Value {
    match name {
        "geodesic-oracles" => json!({"oracle_steps": 1024, "arclength": FRAC_PI_2, "tilt": 0.5, "hyperbolic_length": 1.0}),
        "flat-linfty" => json!({"n_geodesics": 20, "region_half_width": 5.0}),
        "sphere-transitive" => json!({
            "n_loops": 5, "loop_scale": 1.0, "depth": 4, "n_dirs": 200,
            "n_triangles": 20, "triangle_scale": 0.6
        }),
        "product-s2xr" => json!({"n_loops": 5, "loop_scale": 0.5, "depth": 3, "n_dirs": 200, "n_geodesics": 20}),
        "product-s2xs2" => json!({
            "n_loops": 4, "loop_scale": 0.5, "depth": 3, "n_dirs": 200, "smooth_eps": 0.05, "n_geodesics": 20
        }),
        "sphere-homothety" => json!({"n_geodesics": 20, "n_basepoints": 10, "n_dirs": 12}),
        "sphere-constant" => json!({"n_geodesics": 20, "n_basepoints": 10, "n_dirs": 12}),
        "mainlemma-sphere" => json!({"base": [1.2, 0.3]}),
        "mainlemma-hyperbolic" => json!({"base": [0.0, 1.0]}),
        "regular-corners" => json!({"t0": 0.1, "halvings": 6}),
        "decomposition-r3-l1" => json!({"n_samples": 8, "n_geodesics": 20}),
        "negative-controls" => json!({"n_geodesics": 20}),
        "sphere-sine-warp" => json!({"n_geodesics": 20, "amplitude": 0.3, "frequency": 3.0}),
        _ => unreachable!("catalog and defaults agree"),
    }
}

pub(super) fn build(name: &str, description: &str, params: Params, opts: &RunOptions) -> Result<Scenario> {
    let mut b = Builder {
        s: Scenario {
            name: name.to_string(),
            description: description.to_string(),
            manifold: Arc::new(ChartManifold::euclidean(1, 1.0)),
            oracles: Vec::new(),
            declared_decompositions: Vec::new(),
            suite: Vec::new(),
            seeds: (0..4).map(|k| opts.seed.wrapping_add(k)).collect(),
            params,
            grid: opts.grid(),
        },
        steps: opts.steps,
    };
    match name {
        "geodesic-oracles" => geodesic_oracles(&mut b)?,
        "flat-linfty" => flat_linfty(&mut b)?,
        "sphere-transitive" => sphere_transitive(&mut b)?,
        "product-s2xr" => product_s2xr(&mut b)?,
        "product-s2xs2" => product_s2xs2(&mut b)?,
        "sphere-homothety" => sphere_homothety(&mut b)?,
        "sphere-constant" => sphere_constant(&mut b)?,
        "mainlemma-sphere" => mainlemma(&mut b, ChartManifold::sphere(1.0))?,
        "mainlemma-hyperbolic" => mainlemma(&mut b, ChartManifold::hyperbolic())?,
        "regular-corners" => regular_corners(&mut b)?,
        "decomposition-r3-l1" => decomposition(&mut b)?,
        "negative-controls" => negative_controls(&mut b)?,
        "sphere-sine-warp" => sphere_sine_warp(&mut b)?,
        _ => return Err(Error::UnknownScenario(name.to_string())),
    }
    Ok(b.s)
}

struct Builder {
    s: Scenario,
    steps: Option<usize>,
}

impl Builder {
    fn chart(&self, m: ChartManifold) -> Result<Arc<ChartManifold>> {
        Ok(Arc::new(match self.steps {
            Some(k) => m.with_steps(k)?,
            None => m,
        }))
    }

    fn set_manifold(&mut self, m: ChartManifold) -> Result<Arc<ChartManifold>> {
        let m = self.chart(m)?;
        self.s.manifold = Arc::clone(&m);
        Ok(m)
    }

    fn oracle(&mut self, o: MapOracle) -> MapOracle {
        self.s.oracles.push((o.label().to_string(), o.clone()));
        o
    }

    fn entry(
        &mut self,
        name: &str,
        operation: &'static str,
        criterion: Option<u8>,
        run: impl Fn(&Context<'_>) -> Result<Outcome> + Send + Sync + 'static,
    ) {
        self.s.suite.push(SuiteEntry::new(name, operation, criterion, run));
    }
}

/// Result computed once and shared by several entries.
struct Shared<T>(Arc<OnceLock<std::result::Result<T, String>>>);

impl<T> Clone for Shared<T> {
    fn clone(&self) -> Self {
        Shared(Arc::clone(&self.0))
    }
}

impl<T> Shared<T> {
    fn new() -> Self {
        Shared(Arc::new(OnceLock::new()))
    }

    fn get(&self, f: impl FnOnce() -> Result<T>) -> Result<&T> {
        self.0
            .get_or_init(|| f().map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::Sampling(format!("shared step failed: {e}")))
    }
}

fn pt(x: &[f64]) -> Point {
    DVector::from_column_slice(x)
}

fn to_r3(x: &[f64]) -> Vector3<f64> {
    let (st, ct) = x[0].sin_cos();
    let (sp, cp) = x[1].sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

fn spherical_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let num = a.dot(&b.cross(c)).abs();
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * num.atan2(den)
}

fn sphere_region() -> DomainBox {
    DomainBox::new(vec![0.9, -1.0], vec![2.2, 1.0]).expect("valid box")
}

fn residual_of(r: &AffinityReport) -> f64 {
    [Some(r.linearity_residual), r.seminorm_residual, r.parallel_residual]
        .into_iter()
        .flatten()
        .fold(0.0, f64::max)
}

fn affine_verdict(r: &AffinityReport) -> Outcome {
    Outcome::all(vec![
        ("verdict", Outcome::equals(r.verdict, AffineVerdict::Affine)),
        ("max_residual", Outcome::at_most(residual_of(r), AFFINE_TOL)),
    ])
}

fn parallel_outcome(r: &AffinityReport) -> Outcome {
    Outcome::all(vec![
        ("residual", Outcome::at_most(r.parallel_residual.unwrap_or(f64::NAN), AFFINE_TOL)),
        ("geodesics", Outcome::at_least(r.samples.n_geodesics as f64, MIN_GEODESICS as f64)),
    ])
}

/// Shared assessment plus the standard verdict and parallel entries.
fn assessed(b: &mut Builder, o: &MapOracle, region: DomainBox, criterion_verdict: Option<u8>) -> Shared<AffinityReport> {
    let cache = Shared::new();
    let (c, oc, reg) = (cache.clone(), o.clone(), region.clone());
    b.entry("verdict", "affinity_test", criterion_verdict, move |ctx| {
        let r = c.get(|| assess_affinity(&oc, &reg, ctx.params.usize("n_geodesics")?, ctx.seed(0)))?;
        ctx.record("affinity", r)?;
        Ok(affine_verdict(r))
    });
    let (c, oc) = (cache.clone(), o.clone());
    b.entry("parallel", "parallel_invariance_check", Some(5), move |ctx| {
        let r = c.get(|| assess_affinity(&oc, &region, ctx.params.usize("n_geodesics")?, ctx.seed(0)))?;
        Ok(parallel_outcome(r))
    });
    cache
}

fn holonomy_summary(s: &HolonomySample, dirs: usize) -> Result<(HolonomySummary, TransitivityReport, SplittingReport)> {
    let t = transitivity_test(s, dirs, COVERAGE_TOL)?;
    let split = invariant_subspaces(s, 1e-3)?;
    Ok((s.summary(&t, &split), t, split))
}

/// Closure of a seeded loop sample at `p`.
fn closed_sample(ctx: &Context<'_>, m: &ChartManifold, p: &Point) -> Result<(HolonomySample, HolonomySample)> {
    let s = sample_holonomy(m, p, ctx.params.usize("n_loops")?, ctx.params.f64("loop_scale")?, ctx.seed(0))?;
    let c = group_closure(&s, ctx.params.usize("depth")?)?;
    Ok((s, c))
}

fn splitting_entry(b: &mut Builder, m: Arc<ChartManifold>, p: Point, dims: Vec<usize>, fixed: usize) -> Shared<(HolonomySample, SplittingReport)> {
    let cache: Shared<(HolonomySample, SplittingReport)> = Shared::new();
    let c = cache.clone();
    b.entry("splitting", "invariant_subspaces", Some(3), move |ctx| {
        let n_dirs = ctx.params.usize("n_dirs")?;
        let (summary, _, split) = {
            let (s, closed) = closed_sample(ctx, &m, &p)?;
            let (summary, t, split) = holonomy_summary(&closed, n_dirs)?;
            c.get(|| Ok((s, split.clone())))?;
            (summary, t, split)
        };
        ctx.record("holonomy", &summary)?;
        Ok(Outcome::all(vec![
            (
                "structure",
                Outcome::equals(
                    json!({"verdict": summary.verdict, "block_dims": split.block_dims, "fixed_dim": split.fixed_dim}),
                    json!({"verdict": Verdict::NonTransitive, "block_dims": dims, "fixed_dim": fixed}),
                ),
            ),
            ("n_dirs", Outcome::at_least(n_dirs as f64, MIN_DIRS as f64)),
        ]))
    });
    cache
}

fn geodesic_oracles(b: &mut Builder) -> Result<()> {
    let sphere = b.set_manifold(ChartManifold::sphere(1.0))?;
    b.entry("closed_forms", "integrate_geodesic", Some(1), |ctx| {
        let steps = ctx.params.usize("oracle_steps")?;
        let (sphere_err, hyper_err) = closed_form_errors(ctx, steps)?;
        Ok(Outcome::at_most(sphere_err.max(hyper_err), ORACLE_TOL)
            .with_detail(format!("sphere {sphere_err:e}, hyperbolic {hyper_err:e}, {steps} steps")))
    });
    b.entry("fourth_order", "integrate_geodesic", None, |ctx| {
        let (coarse, _) = closed_form_errors(ctx, 16)?;
        let (fine, _) = closed_form_errors(ctx, 32)?;
        Ok(Outcome::at_least(coarse / fine, 8.0).with_detail(format!("16 steps {coarse:e}, 32 steps {fine:e}")))
    });
    let m = Arc::clone(&sphere);
    b.entry("transport_isometry", "parallel_transport", None, move |ctx| {
        let (p, u) = tilted_start(ctx.params.f64("tilt")?);
        let gamma = integrate_geodesic(&m, &TangentVector::new(p.clone(), u.clone()), ctx.params.f64("arclength")?, m.steps())?;
        let w = pt(&[0.3, -0.8]);
        let moved = parallel_transport(&m, &gamma, &TangentVector::new(p.clone(), w.clone()))?;
        let end = gamma.end();
        let x = end.point.as_slice();
        // Transport along a geodesic keeps the length and the angle with the velocity.
        let norm_err = (m.norm_at(x, &moved.components)? - m.norm_at(p.as_slice(), &w)?).abs();
        let angle_err = (m.inner(x, &moved.components, &end.velocity)? - m.inner(p.as_slice(), &w, &u)?).abs();
        Ok(Outcome::all(vec![
            ("norm", Outcome::at_most(norm_err, 1e-8)),
            ("angle", Outcome::at_most(angle_err, 1e-8)),
        ]))
    });
    let m = sphere;
    b.entry("log_round_trip", "riemannian_log", None, move |ctx| {
        let mut rng = seeded(ctx.seed(0));
        let mut worst: f64 = 0.0;
        for _ in 0..8 {
            let p = random_point(&mut rng, &[0.9, -1.0], &[2.2, 1.0]);
            let f = orthonormal_frame(&m, p.as_slice())?;
            let dir = crate::linalg::random_unit(&mut rng, 2);
            let v = &f * dir * (0.9 * m.convexity_radius());
            let x = exp(&m, &TangentVector::new(p.clone(), v.clone()))?;
            let back = riemannian_log(&m, &p, &x, 1e-12)?;
            worst = worst.max((back.components - v).amax());
        }
        Ok(Outcome::at_most(worst, 1e-8))
    });
    Ok(())
}

/// Equator point and a unit chart velocity tilted by `tilt` towards the north pole.
fn tilted_start(tilt: f64) -> (Point, DVector<f64>) {
    (pt(&[FRAC_PI_2, 0.0]), DVector::from_vec(vec![-tilt.sin(), tilt.cos()]))
}

/// Largest deviation from the great circle `cos s·P + sin s·U` and from the
/// hyperbolic vertical geodesic `(0, eˢ)`.
fn closed_form_errors(ctx: &Context<'_>, steps: usize) -> Result<(f64, f64)> {
    let tilt = ctx.params.f64("tilt")?;
    let sphere = ChartManifold::sphere(1.0).with_steps(steps)?;
    let (p, u) = tilted_start(tilt);
    let gamma = integrate_geodesic(&sphere, &TangentVector::new(p, u), ctx.params.f64("arclength")?, steps)?;
    let big_p = Vector3::new(1.0, 0.0, 0.0);
    let big_u = Vector3::new(0.0, tilt.cos(), tilt.sin());
    let sphere_err = gamma
        .nodes()
        .iter()
        .map(|n| (to_r3(n.point.as_slice()) - (n.t.cos() * big_p + n.t.sin() * big_u)).norm())
        .fold(0.0, f64::max);

    let hyper = ChartManifold::hyperbolic().with_steps(steps)?;
    let len = ctx.params.f64("hyperbolic_length")?;
    let gamma = integrate_geodesic(&hyper, &TangentVector::from_slices(&[0.0, 1.0], &[0.0, 1.0]), len, steps)?;
    let hyper_err = gamma
        .nodes()
        .iter()
        .map(|n| (n.point[0].powi(2) + (n.point[1] - n.t.exp()).powi(2)).sqrt())
        .fold(0.0, f64::max);
    Ok((sphere_err, hyper_err))
}

fn flat_linfty(b: &mut Builder) -> Result<()> {
    let m = b.set_manifold(ChartManifold::euclidean(2, 10.0))?;
    let o = b.oracle(MapOracle::identity(Arc::clone(&m), "linf", dist::linf()));
    let half = b.s.params.f64("region_half_width")?;
    let cache = assessed(b, &o, DomainBox::cube(2, half), Some(6));
    b.entry("kernel", "kernel_distribution", None, move |ctx| {
        let r = cache.get(|| Err(Error::Sampling("assessment did not run".into())))?;
        let _ = ctx;
        Ok(Outcome::equals(r.kernel_dims.clone(), vec![0; r.kernel_dims.len().max(1)]))
    });
    b.entry("differential_grid", "metric_differential", None, move |ctx| {
        let q = differential_field(&o, &pt(&[0.0, 0.0]), ctx.grid)?;
        ctx.write_norm_csv("differential.csv", &q)?;
        Ok(Outcome::at_most(norm_distance(&q, &NormField::linf(2, ctx.grid))?, 1e-9))
    });
    Ok(())
}

fn sphere_transitive(b: &mut Builder) -> Result<()> {
    let m = b.set_manifold(ChartManifold::sphere(1.0))?;
    let p = pt(&[FRAC_PI_2, 0.0]);

    let (mm, pp) = (Arc::clone(&m), p.clone());
    b.entry("gauss_bonnet", "sample_holonomy", Some(2), move |ctx| {
        let n = ctx.params.usize("n_triangles")?;
        let s = sample_holonomy(&mm, &pp, n, ctx.params.f64("triangle_scale")?, ctx.seed(1))?;
        let mut rows = Vec::with_capacity(n);
        let mut worst: f64 = 0.0;
        for (a, origin) in s.elements.iter().zip(&s.origins).skip(1) {
            let ElementOrigin::Loop(info) = origin else { continue };
            let [x, y, z] = &info.vertices;
            let area = spherical_area(&to_r3(x.as_slice()), &to_r3(y.as_slice()), &to_r3(z.as_slice()));
            let angle = rotation_angle(a).abs();
            worst = worst.max((angle - area).abs());
            rows.push(vec![angle, area]);
        }
        ctx.write_csv("triangles.csv", &["holonomy_angle", "area"], &rows)?;
        Ok(Outcome::all(vec![
            ("max_error", Outcome::at_most(worst, GAUSS_BONNET_TOL)),
            ("triangles", Outcome::at_least(rows.len() as f64, 20.0)),
        ]))
    });

    let closure: Shared<HolonomySample> = Shared::new();
    let (c, mm, pp) = (closure.clone(), Arc::clone(&m), p.clone());
    b.entry("transitive", "transitivity_test", Some(3), move |ctx| {
        let s = c.get(|| closed_sample(ctx, &mm, &pp).map(|(_, c)| c))?;
        let n_dirs = ctx.params.usize("n_dirs")?;
        let (summary, t, _) = holonomy_summary(s, n_dirs)?;
        ctx.record("holonomy", &summary)?;
        Ok(Outcome::all(vec![
            ("verdict", Outcome::equals(t.verdict, Verdict::Transitive)),
            ("coverage_score", Outcome::at_most(t.coverage_score, COVERAGE_TOL)),
            ("n_dirs", Outcome::at_least(n_dirs as f64, MIN_DIRS as f64)),
        ]))
    });
    let (c, mm, pp) = (closure.clone(), Arc::clone(&m), p.clone());
    b.entry("irreducible", "invariant_subspaces", None, move |ctx| {
        let s = c.get(|| closed_sample(ctx, &mm, &pp).map(|(_, c)| c))?;
        let split = invariant_subspaces(s, 1e-3)?;
        Ok(Outcome::equals((split.block_dims, split.fixed_dim), (vec![2], 0)))
    });
    let (c, mm, pp) = (closure.clone(), Arc::clone(&m), p.clone());
    b.entry("averaged_linf", "average_norm", Some(4), move |ctx| {
        let s = c.get(|| closed_sample(ctx, &mm, &pp).map(|(_, c)| c))?;
        let avg = average_norm(&NormField::linf(2, ctx.grid), s)?;
        ctx.write_norm_csv("averaged_linf.csv", &avg)?;
        let d = distance_to_euclidean(&avg)?;
        ctx.record("averaged_linf_distance", d)?;
        Ok(Outcome::at_most(d, AVERAGE_TOL).with_detail(format!("{} group elements", s.len())))
    });
    let (c, mm, pp) = (closure, m, p);
    b.entry("orbit_hull", "orbit_hull_norm", None, move |ctx| {
        let s = c.get(|| closed_sample(ctx, &mm, &pp).map(|(_, c)| c))?;
        let hull = orbit_hull_norm(s, &DVector::from_vec(vec![1.0, 0.0]), ctx.grid)?;
        Ok(Outcome::at_most(distance_to_euclidean(&hull)?, 0.01))
    });
    Ok(())
}

fn product_s2xr(b: &mut Builder) -> Result<()> {
    let m = b.set_manifold(ChartManifold::sphere_times_line())?;
    let p = pt(&[FRAC_PI_2, 0.0, 0.0]);
    let o = b.oracle(MapOracle::new(Arc::clone(&m), "projection", |x| vec![x[2]], dist::euclidean()));
    let split = splitting_entry(b, Arc::clone(&m), p.clone(), vec![2, 1], 1);

    b.entry("block_norm", "block_sum_norm", None, move |ctx| {
        let (s, split) = split.get(|| Err(Error::Sampling("splitting did not run".into())))?;
        let q = block_sum_norm(split, &[NormField::euclidean(2, ctx.grid), NormField::euclidean(1, 2)], ctx.grid)?;
        ctx.write_norm_csv("block_norm.csv", &q)?;
        Ok(Outcome::all(vec![
            ("invariance", Outcome::at_most(invariance_residual(&q, s)?, 1e-6)),
            ("distance_to_euclidean", Outcome::at_least(distance_to_euclidean(&q)?, NON_EUCLIDEAN)),
        ]))
    });
    let region = DomainBox::new(vec![0.9, -1.0, -1.0], vec![2.2, 1.0, 1.0])?;
    let cache = assessed(b, &o, region, None);
    b.entry("kernel", "kernel_distribution", None, move |_| {
        let r = cache.get(|| Err(Error::Sampling("assessment did not run".into())))?;
        Ok(Outcome::equals(r.kernel_dims.clone(), vec![2; r.kernel_dims.len().max(1)]))
    });
    b.entry("kernel_parallel", "kernel_distribution", None, move |_| {
        let m = o.source();
        let gamma = integrate_geodesic(m, &TangentVector::new(p.clone(), pt(&[0.4, 0.3, 0.5])), 1.0, m.steps())?;
        Ok(Outcome::at_most(kernel_parallelism(&o, &gamma, 4, 642)?, 1e-3))
    });
    Ok(())
}

fn product_s2xs2(b: &mut Builder) -> Result<()> {
    let m = b.set_manifold(ChartManifold::sphere_times_sphere())?;
    let p = pt(&[FRAC_PI_2, 0.0, FRAC_PI_2, 0.0]);
    let d = dist::block_sum(vec![(0..2, dist::great_circle(1.0)), (2..4, dist::great_circle(1.0))]);
    let o = b.oracle(MapOracle::identity(Arc::clone(&m), "l1-change", d));
    let split = splitting_entry(b, Arc::clone(&m), p, vec![2, 2], 0);

    let block: Shared<NormField> = Shared::new();
    let (sp, bl) = (split.clone(), block.clone());
    b.entry("smoothed_block_norm", "minkowski_smooth", Some(4), move |ctx| {
        let (s, split) = sp.get(|| Err(Error::Sampling("splitting did not run".into())))?;
        let q = bl.get(|| {
            block_sum_norm(split, &[NormField::euclidean(2, ctx.grid), NormField::euclidean(2, ctx.grid)], ctx.grid)
        })?;
        let smooth = minkowski_smooth(q, ctx.params.f64("smooth_eps")?)?;
        let mk = minkowski_check(&smooth.norm, 8);
        ctx.record("smoothed_minkowski", &mk)?;
        ctx.write_norm_csv("smoothed_block_norm.csv", &smooth.norm)?;
        Ok(Outcome::all(vec![
            ("invariance_residual", Outcome::at_most(invariance_residual(&smooth.norm, s)?, INVARIANCE_TOL)),
            ("distance_to_euclidean", Outcome::at_least(distance_to_euclidean(&smooth.norm)?, NON_EUCLIDEAN)),
        ]))
    });
    b.entry("minkowski", "minkowski_check", None, |ctx| {
        let v = ctx_value(ctx, "smoothed_minkowski")?;
        let smooth = v.get("smooth").and_then(Value::as_bool).unwrap_or(false);
        let lambda = v.get("hessian_min_eigen").and_then(Value::as_f64).unwrap_or(f64::NAN);
        Ok(Outcome::all(vec![
            ("smooth", Outcome::equals(smooth, true)),
            ("hessian_min_eigen", Outcome::at_least(lambda, 0.0)),
        ]))
    });
    b.entry("section_restriction", "restrict_norm_to_section", None, move |ctx| {
        let (_, split) = split.get(|| Err(Error::Sampling("splitting did not run".into())))?;
        let q = block.get(|| Err(Error::Sampling("block norm did not run".into())))?;
        let basis = DMatrix::from_columns(&[split.subspace_bases[0].column(0), split.subspace_bases[1].column(0)]);
        let section = restrict_norm_to_section(q, &basis, ctx.grid)?;
        ctx.write_norm_csv("section_norm.csv", &section)?;
        let signs = HolonomySample::from_matrices(
            [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)]
                .iter()
                .map(|(a, b)| DMatrix::from_diagonal(&DVector::from_vec(vec![*a, *b])))
                .collect(),
        );
        let back = extend_from_section(&section, split, ctx.grid)?;
        Ok(Outcome::all(vec![
            ("distance_to_l1", Outcome::at_most(norm_distance(&section, &NormField::l1(2, ctx.grid))?, 1e-9)),
            ("sign_group_invariance", Outcome::at_most(invariance_residual(&section, &signs)?, 1e-12)),
            ("extension", Outcome::at_most(norm_distance(&back, q)?, 1e-9)),
        ]))
    });
    let region = DomainBox::new(vec![1.0, -0.5, 1.0, -0.5], vec![2.1, 0.5, 2.1, 0.5])?;
    assessed(b, &o, region, None);
    Ok(())
}

/// A value recorded by an earlier entry.
fn ctx_value(ctx: &Context<'_>, key: &str) -> Result<Value> {
    ctx.data
        .borrow()
        .get(key)
        .cloned()
        .ok_or_else(|| Error::Sampling(format!("`{key}` was not recorded")))
}

fn basepoints(ctx: &Context<'_>, region: &DomainBox) -> Result<Vec<Point>> {
    let mut rng = seeded(ctx.seed(2));
    Ok((0..ctx.params.usize("n_basepoints")?)
        .map(|_| random_point(&mut rng, &region.lower, &region.upper))
        .collect())
}

fn sphere_homothety(b: &mut Builder) -> Result<()> {
    let m = b.set_manifold(ChartManifold::sphere(1.0))?;
    let o = b.oracle(MapOracle::identity(Arc::clone(&m), "radius-2", dist::great_circle(2.0)));
    assessed(b, &o, sphere_region(), None);
    let oc = o.clone();
    b.entry("homothety_constant", "metric_differential", Some(6), move |ctx| {
        let pts = basepoints(ctx, &sphere_region())?;
        let r = homothety_constant(&oc, &pts, ctx.params.usize("n_dirs")?)?;
        ctx.record("homothety", &r)?;
        Ok(Outcome::all(vec![
            ("spread", Outcome::at_most(r.spread, AFFINE_TOL)),
            ("constant", Outcome::at_most((r.constant - 2.0).abs(), AFFINE_TOL)),
            ("basepoints", Outcome::at_least(r.basepoints as f64, MIN_BASEPOINTS as f64)),
        ])
        .with_detail(format!("a = {}", r.constant)))
    });
    b.entry("differential_grid", "metric_differential", None, move |ctx| {
        let q = differential_field(&o, &pt(&[FRAC_PI_2, 0.0]), ctx.grid)?;
        ctx.write_norm_csv("differential.csv", &q)?;
        Ok(Outcome::at_most(norm_distance(&q, &NormField::scaled_euclidean(2, 2.0, ctx.grid))?, 1e-6))
    });
    Ok(())
}

fn sphere_constant(b: &mut Builder) -> Result<()> {
    let m = b.set_manifold(ChartManifold::sphere(1.0))?;
    let o = b.oracle(MapOracle::constant(m));
    let cache = assessed(b, &o, sphere_region(), None);
    b.entry("kernel", "kernel_distribution", None, move |_| {
        let r = cache.get(|| Err(Error::Sampling("assessment did not run".into())))?;
        Ok(Outcome::equals(r.kernel_dims.clone(), vec![2; r.kernel_dims.len().max(1)]))
    });
    b.entry("homothety_constant", "metric_differential", None, move |ctx| {
        let r = homothety_constant(&o, &basepoints(ctx, &sphere_region())?, ctx.params.usize("n_dirs")?)?;
        ctx.record("homothety", &r)?;
        Ok(Outcome::at_most(r.constant.abs() + r.spread, 1e-12))
    });
    Ok(())
}

fn mainlemma(b: &mut Builder, m: ChartManifold) -> Result<()> {
    let m = b.set_manifold(m)?;
    let report: Shared<crate::affine::MainLemmaReport> = Shared::new();
    let (c, mm) = (report.clone(), Arc::clone(&m));
    let run = move |ctx: &Context<'_>| -> Result<crate::affine::MainLemmaReport> {
        let base = ctx.params.f64_list("base")?;
        let p = pt(&base);
        let f = orthonormal_frame(&mm, &base)?;
        let g = TangentVector::new(p.clone(), f.column(0).into_owned());
        let h = TangentVector::new(p.clone(), f.column(1).into_owned());
        mainlemma_check(&mm, &p, &g, &h, &MAINLEMMA_RADII, MAINLEMMA_DT_FACTOR)
    };
    let run = Arc::new(run);
    let r1 = Arc::clone(&run);
    b.entry("decay_factor", "mainlemma_check", Some(7), move |ctx| {
        let r = c.get(|| (*r1)(ctx))?;
        ctx.record("mainlemma", r)?;
        let rows: Vec<Vec<f64>> = (0..r.r_list.len())
            .map(|i| {
                vec![
                    r.r_list[i],
                    r.dt_list[i],
                    r.ratios[i].unwrap_or(f64::NAN),
                    r.central_ratios[i].unwrap_or(f64::NAN),
                ]
            })
            .collect();
        ctx.write_csv("ratios.csv", &["r", "dt", "ratio", "central_ratio"], &rows)?;
        Ok(Outcome::within(&r.factors, DECAY_BAND.0, DECAY_BAND.1)
            .with_detail("ratio(r) / ratio(r/2) with forward differences in t"))
    });
    let c = report.clone();
    let r2 = Arc::clone(&run);
    b.entry("ratios_decrease", "mainlemma_check", None, move |ctx| {
        let r = c.get(|| (*r2)(ctx))?;
        let ok = r.ratios.iter().all(Option::is_some)
            && r.ratios.windows(2).all(|w| w[1].unwrap_or(f64::NAN) < w[0].unwrap_or(f64::NAN));
        Ok(Outcome::equals(ok, true))
    });
    b.entry("central_ratios", "mainlemma_check", None, move |ctx| {
        let r = report.get(|| (*run)(ctx))?;
        let worst = r
            .central_ratios
            .iter()
            .map(|x| x.unwrap_or(f64::NAN))
            .fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) });
        Ok(Outcome::at_most(worst, 1e-6).with_detail("central differences in t"))
    });
    Ok(())
}

fn regular_corners(b: &mut Builder) -> Result<()> {
    let m = b.set_manifold(ChartManifold::euclidean(2, 10.0))?;
    let linf = b.oracle(MapOracle::identity(Arc::clone(&m), "linf", dist::linf()));
    let euclid = b.oracle(MapOracle::identity(m, "euclidean", dist::euclidean()));
    let t_list = |ctx: &Context<'_>| -> Result<Vec<f64>> {
        let t0 = ctx.params.f64("t0")?;
        Ok((0..ctx.params.usize("halvings")?).map(|k| t0 * 0.5f64.powi(k as i32)).collect())
    };
    let tv = |h: &[f64]| TangentVector::from_slices(&[0.0, 0.0], h);
    b.entry("corner_and_smooth", "regular_vector_test", Some(8), move |ctx| {
        let ts = t_list(ctx)?;
        let corner = regular_vector_test(&linf, &tv(&[1.0, 1.0]), &tv(&[1.0, -1.0]), &ts)?;
        let smooth = regular_vector_test(&linf, &tv(&[1.0, 0.0]), &tv(&[0.0, 1.0]), &ts)?;
        let rows: Vec<Vec<f64>> = (0..ts.len())
            .map(|i| vec![ts[i], corner.quotients[i], smooth.quotients[i]])
            .collect();
        ctx.write_csv("quotients.csv", &["t", "corner", "smooth"], &rows)?;
        ctx.record("corner", &corner)?;
        ctx.record("smooth", &smooth)?;
        Ok(Outcome::all(vec![
            ("corner_limit", Outcome::at_least(corner.limit, CORNER_LIMIT)),
            ("smooth_limit", Outcome::at_most(smooth.limit.abs(), SMOOTH_LIMIT)),
        ]))
    });
    b.entry("euclidean_regular", "regular_vector_test", None, move |ctx| {
        let r = regular_vector_test(&euclid, &tv(&[1.0, 0.5]), &tv(&[-0.3, 1.0]), &t_list(ctx)?)?;
        Ok(Outcome::at_most(r.limit.abs(), 1e-6))
    });
    Ok(())
}

fn drop_coordinate(source: &Arc<ChartManifold>, quotient: &Arc<ChartManifold>, drop: usize) -> Decomposition {
    let keep: Vec<usize> = (0..3).filter(|&i| i != drop).collect();
    Decomposition {
        f_p: MapOracle::new(
            Arc::clone(source),
            format!("drop-x{drop}"),
            move |x| keep.iter().map(|&i| x[i]).collect(),
            dist::euclidean(),
        ),
        quotient: Arc::clone(quotient),
        f_a: NormField::l1(2, crate::norms::DEFAULT_GRID),
        f_i: MapOracle::identity(Arc::clone(quotient), "l1", dist::l1()),
    }
}

fn decomposition(b: &mut Builder) -> Result<()> {
    let m = b.set_manifold(ChartManifold::euclidean(3, 5.0))?;
    let quotient = b.chart(ChartManifold::euclidean(2, 10.0))?;
    let o = b.oracle(MapOracle::new(Arc::clone(&m), "r3-l1", |x| vec![x[0], x[1]], dist::l1()));
    let declared = drop_coordinate(&m, &quotient, 2);
    let mismatched = drop_coordinate(&m, &quotient, 0);
    b.s.declared_decompositions.push(("declared".into(), declared.clone()));
    b.s.declared_decompositions.push(("mismatched".into(), mismatched.clone()));
    let region = DomainBox::cube(3, 2.0);

    let (oc, reg) = (o.clone(), region.clone());
    b.entry("factors", "verify_decomposition", Some(9), move |ctx| {
        let n = ctx.params.usize("n_samples")?;
        let good = verify_decomposition(&oc, &declared, &reg, n, ctx.seed(1), DECOMPOSITION_TOL)?;
        let bad = verify_decomposition(&oc, &mismatched, &reg, n, ctx.seed(1), DECOMPOSITION_TOL)?;
        ctx.record("declared", &good)?;
        ctx.record("mismatched", &bad)?;
        let mut parts: Vec<(&str, Outcome)> = Vec::new();
        for name in ["a_kernel_angle", "b_invariance", "c_local_isometry", "d_composite"] {
            let r = good.check(name).map_or(f64::NAN, |c| c.residual);
            parts.push((name, Outcome::at_most(r, DECOMPOSITION_TOL)));
        }
        let angle = bad.check("a_kernel_angle").map_or(f64::NAN, |c| c.residual);
        parts.push(("mismatch_angle", Outcome::at_least(angle, MISMATCH_ANGLE)));
        Ok(Outcome::all(parts))
    });
    let cache = assessed(b, &o, region, Some(6));
    b.entry("kernel", "kernel_distribution", None, move |_| {
        let r = cache.get(|| Err(Error::Sampling("assessment did not run".into())))?;
        Ok(Outcome::equals(r.kernel_dims.clone(), vec![1; r.kernel_dims.len().max(1)]))
    });
    Ok(())
}

fn not_affine(r: &AffinityReport) -> Outcome {
    Outcome::all(vec![
        ("verdict", Outcome::equals(r.verdict, AffineVerdict::NotAffine)),
        ("linearity_residual", Outcome::at_least(r.linearity_residual, NOT_AFFINE_RESIDUAL)),
    ])
}

fn negative_controls(b: &mut Builder) -> Result<()> {
    let plane = b.set_manifold(ChartManifold::euclidean(2, 10.0))?;
    let warp = b.oracle(MapOracle::new(
        Arc::clone(&plane),
        "sine-warp",
        |x| vec![x[0] + 0.3 * x[1].sin(), x[1]],
        dist::euclidean(),
    ));
    let sphere = b.chart(ChartManifold::sphere(1.0))?;
    let theta = b.oracle(MapOracle::new(sphere, "colatitude", |x| vec![x[0]], dist::euclidean()));
    let bad = b.oracle(MapOracle::identity(plane, "sqrt-distance", dist::sqrt_sum_squared()));

    b.entry("sine_warp", "affinity_test", Some(6), move |ctx| {
        let r = crate::affine::affinity_test(&warp, &DomainBox::cube(2, 5.0), ctx.params.usize("n_geodesics")?, ctx.seed(0))?;
        ctx.record("sine_warp", &r)?;
        Ok(not_affine(&r))
    });
    b.entry("non_parallel", "parallel_invariance_check", Some(5), move |ctx| {
        let region = DomainBox::new(vec![0.6, -1.0], vec![1.2, 1.0])?;
        let r = parallel_invariance_suite(&theta, &region, ctx.params.usize("n_geodesics")?, ctx.seed(0))?;
        ctx.record("non_parallel", &r)?;
        Ok(Outcome::at_least(r.residual, NON_PARALLEL))
    });
    b.entry("triangle_violation", "seminorm_check", None, move |_| {
        let r = seminorm_check(&bad, &pt(&[0.0, 0.0]), 12)?;
        let pts: Vec<Point> = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]].iter().map(|x| pt(x)).collect();
        let (_, tri) = bad.distance_residuals(&pts);
        Ok(Outcome::all(vec![
            ("seminorm_triangle", Outcome::at_least(r.triangle, 0.1)),
            ("distance_triangle", Outcome::at_least(tri, 0.5)),
        ]))
    });
    Ok(())
}

fn sphere_sine_warp(b: &mut Builder) -> Result<()> {
    let m = b.set_manifold(ChartManifold::sphere(1.0))?;
    let (a, k) = (b.s.params.f64("amplitude")?, b.s.params.f64("frequency")?);
    let o = b.oracle(MapOracle::new(
        m,
        "sphere-sine-warp",
        move |x| vec![x[0] + a * (k * x[1]).sin(), x[1]],
        dist::great_circle(1.0),
    ));
    b.entry("verdict", "affinity_test", Some(6), move |ctx| {
        let r = crate::affine::affinity_test(&o, &sphere_region(), ctx.params.usize("n_geodesics")?, ctx.seed(0))?;
        ctx.record("affinity", &r)?;
        Ok(not_affine(&r))
    });
    Ok(())
}
