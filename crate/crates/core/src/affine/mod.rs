//! Metric differentials of maps into metric spaces and the numerical checks
//! built on them: affinity, semi-norm structure, parallel invariance, regular
//! vectors, the Main Lemma limit, kernel distributions and declared
//! decompositions.

mod checks;
mod kernel;
mod mainlemma;
pub mod dist;

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{exp_with_steps, ChartManifold, Point, TangentVector};

pub use checks::{
    affinity_test, assess_affinity, differential_field, homothety_constant, parallel_invariance_check,
    parallel_invariance_suite, regular_vector_test, segment_defect, seminorm_check, HomothetyReport,
    ParallelReport, RegularityReport, SegmentDefect, SeminormReport, REGULAR_TOL,
};
pub use dist::Distance;
pub use kernel::{
    kernel_distribution, kernel_parallelism, verify_decomposition, Decomposition, DecompositionCheck,
    DecompositionReport, KernelReport,
};
pub use mainlemma::{mainlemma_check, MainLemmaReport, MAINLEMMA_DT_FACTOR};

/// Residual at or below which a check counts as passed.
pub const AFFINE_TOL: f64 = 1e-4;
/// Residual at or above which a check counts as failed.
pub const NOT_AFFINE_TOL: f64 = 1e-3;
/// Number of halvings in the default `t` list.
pub const DEFAULT_HALVINGS: usize = 6;

pub type PointMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A map `f: M → Y` given by a point map into labels and a distance on labels.
///
/// Both closures must be safe for concurrent read-only use.
#[derive(Clone)]
pub struct MapOracle {
    source: Arc<ChartManifold>,
    point_map: PointMap,
    distance: Distance,
    label: String,
}

impl std::fmt::Debug for MapOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MapOracle")
            .field("label", &self.label)
            .field("source", &self.source.name())
            .finish()
    }
}

impl MapOracle {
    pub fn new(
        source: Arc<ChartManifold>,
        label: impl Into<String>,
        point_map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        distance: Distance,
    ) -> Self {
        Self {
            source,
            point_map: Arc::new(point_map),
            distance,
            label: label.into(),
        }
    }

    /// The identity on chart coordinates, measured with `distance`.
    pub fn identity(source: Arc<ChartManifold>, label: impl Into<String>, distance: Distance) -> Self {
        Self::new(source, label, |x| x.to_vec(), distance)
    }

    /// Sends everything to a single point.
    pub fn constant(source: Arc<ChartManifold>) -> Self {
        Self::new(source, "constant", |_| vec![0.0], dist::euclidean())
    }

    pub fn source(&self) -> &ChartManifold {
        &self.source
    }

    pub fn source_arc(&self) -> &Arc<ChartManifold> {
        &self.source
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn image(&self, x: &[f64]) -> Vec<f64> {
        (self.point_map)(x)
    }

    pub fn label_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        (self.distance)(a, b)
    }

    /// `d̄(f(x), f(z))`.
    pub fn distance(&self, x: &[f64], z: &[f64]) -> f64 {
        (self.distance)(&self.image(x), &self.image(z))
    }

    pub fn distance_fn(&self) -> &Distance {
        &self.distance
    }

    /// Largest symmetry defect and triangle-inequality excess of the target
    /// distance over triples of images of `points`.
    pub fn distance_residuals(&self, points: &[Point]) -> (f64, f64) {
        let imgs: Vec<Vec<f64>> = points.iter().map(|p| self.image(p.as_slice())).collect();
        let mut sym: f64 = 0.0;
        let mut tri: f64 = 0.0;
        for a in &imgs {
            sym = sym.max(self.label_distance(a, a).abs());
            for b in &imgs {
                let ab = self.label_distance(a, b);
                sym = sym.max((ab - self.label_distance(b, a)).abs());
                for c in &imgs {
                    let excess = self.label_distance(a, c) - ab - self.label_distance(b, c);
                    tri = tri.max(excess);
                }
            }
        }
        (sym, tri)
    }
}

/// Slope fit of `t ↦ d̄(f(p), f(exp_p(t v)))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDifferential {
    pub value: f64,
    /// `max |d(t)/t − value|` over the used parameters.
    pub residual: f64,
    pub t_used: Vec<f64>,
    /// Parameters dropped because the geodesic left the chart.
    pub truncated: usize,
}

/// `{s·2^{−k}}`, `k = 0..=6`, with `s = 0.1·convexity radius / |v|_g`.
pub fn default_t_list(m: &ChartManifold, v: &TangentVector) -> Result<Vec<f64>> {
    let speed = m.norm_at(v.base.as_slice(), &v.components)?;
    let s = 0.1 * m.convexity_radius() / if speed > 0.0 { speed } else { 1.0 };
    Ok((0..=DEFAULT_HALVINGS).map(|k| s * 0.5f64.powi(k as i32)).collect())
}

/// `|v|^f` with the linearity residual of the fit.
pub fn metric_differential(o: &MapOracle, v: &TangentVector, t_list: &[f64]) -> Result<MetricDifferential> {
    let m = o.source();
    v.check_dim(m)?;
    if t_list.iter().any(|t| !(*t > 0.0) || !t.is_finite()) || t_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::arg("t_list must be positive and strictly decreasing"));
    }
    let fp = o.image(v.base.as_slice());
    let mut used = Vec::with_capacity(t_list.len());
    let mut dists = Vec::with_capacity(t_list.len());
    let mut truncated = 0;
    for &t in t_list {
        match exp_with_steps(m, &v.base, &(&v.components * t), m.steps()) {
            Ok(x) => {
                used.push(t);
                dists.push(o.label_distance(&fp, &o.image(x.as_slice())));
            }
            Err(Error::Truncated { .. }) | Err(Error::Domain { .. }) => truncated += 1,
            Err(e) => return Err(e),
        }
    }
    if used.len() < 3 {
        return Err(Error::Sampling(format!(
            "only {} of {} parameters keep the geodesic in the chart",
            used.len(),
            t_list.len()
        )));
    }
    let stt: f64 = used.iter().map(|t| t * t).sum();
    let std: f64 = used.iter().zip(&dists).map(|(t, d)| t * d).sum();
    let value = std / stt;
    let residual = used
        .iter()
        .zip(&dists)
        .map(|(t, d)| (d / t - value).abs())
        .fold(0.0, f64::max);
    Ok(MetricDifferential {
        value,
        residual,
        t_used: used,
        truncated,
    })
}

/// `|v|^f` with the default `t` list.
pub fn metric_norm(o: &MapOracle, v: &TangentVector) -> Result<f64> {
    let ts = default_t_list(o.source(), v)?;
    metric_differential(o, v, &ts).map(|md| md.value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffineVerdict {
    Affine,
    NotAffine,
    Inconclusive,
}

impl AffineVerdict {
    /// Affine when every residual is at most [`AFFINE_TOL`], not affine when any
    /// reaches [`NOT_AFFINE_TOL`].
    pub fn classify(residuals: &[f64]) -> Self {
        if residuals.iter().any(|r| !r.is_finite() || *r >= NOT_AFFINE_TOL) {
            AffineVerdict::NotAffine
        } else if residuals.iter().all(|r| *r <= AFFINE_TOL) {
            AffineVerdict::Affine
        } else {
            AffineVerdict::Inconclusive
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub seed: u64,
    pub n_geodesics: usize,
    pub used: usize,
    pub degenerate: usize,
    pub skipped: usize,
    /// Segment lengths were drawn from `[scale/4, scale]`.
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinityReport {
    pub verdict: AffineVerdict,
    pub linearity_residual: f64,
    pub seminorm_residual: Option<f64>,
    pub parallel_residual: Option<f64>,
    pub kernel_dims: Vec<usize>,
    /// `d̄(f(x), f(z)) / L` per segment.
    pub segment_constants: Vec<f64>,
    pub samples: SampleInfo,
}

impl AffinityReport {
    fn residuals(&self) -> Vec<f64> {
        let mut r = vec![self.linearity_residual];
        r.extend(self.seminorm_residual);
        r.extend(self.parallel_residual);
        r
    }

    fn reclassify(mut self) -> Self {
        self.verdict = AffineVerdict::classify(&self.residuals());
        self
    }

    pub fn with_seminorm(mut self, r: f64) -> Self {
        self.seminorm_residual = Some(r);
        self.reclassify()
    }

    pub fn with_parallel(mut self, r: f64) -> Self {
        self.parallel_residual = Some(r);
        self.reclassify()
    }

    pub fn with_kernel_dims(mut self, dims: Vec<usize>) -> Self {
        self.kernel_dims = dims;
        self
    }
}

/// Uniform point in the box.
pub(crate) fn random_point<R: Rng + ?Sized>(rng: &mut R, lower: &[f64], upper: &[f64]) -> Point {
    DVector::from_iterator(lower.len(), lower.iter().zip(upper).map(|(a, b)| rng.gen_range(*a..=*b)))
}

pub(crate) fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
