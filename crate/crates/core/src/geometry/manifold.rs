use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = DVector<f64>;

/// Axis-aligned box of admissible chart coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::arg("domain bounds must be non-empty and of equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::arg("domain lower bounds must be strictly below upper bounds"));
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, half_width: f64) -> Self {
        Self {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| v.is_finite() && *v >= *l && *v <= *u)
    }

    /// Shortest side length.
    pub fn scale(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> Point {
        Point::from_iterator(
            self.dim(),
            self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)),
        )
    }

    /// Shrinks every side symmetrically by `margin` (clamped so the box stays non-empty).
    pub fn shrink(&self, margin: f64) -> Self {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let m = margin.min(0.45 * (u - l));
                (l + m, u - m)
            })
            .unzip();
        Self { lower, upper }
    }

    pub fn product(boxes: &[&DomainBox]) -> Self {
        Self {
            lower: boxes.iter().flat_map(|b| b.lower.iter().copied()).collect(),
            upper: boxes.iter().flat_map(|b| b.upper.iter().copied()).collect(),
        }
    }
}

/// Christoffel symbols `Γ^k_{ij}` stored densely as `[k][i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        let d = self.dim;
        self.data[(k * d + i) * d + j] = value;
    }

    /// Sets `Γ^k_{ij}` and `Γ^k_{ji}`.
    pub fn set_sym(&mut self, k: usize, i: usize, j: usize, value: f64) {
        self.set(k, i, j, value);
        self.set(k, j, i, value);
    }

    /// `out^k = Σ_ij Γ^k_ij a^i b^j`.
    pub fn contract(&self, a: &[f64], b: &[f64]) -> DVector<f64> {
        let d = self.dim;
        DVector::from_fn(d, |k, _| {
            let mut acc = 0.0;
            for i in 0..d {
                if a[i] == 0.0 {
                    continue;
                }
                let row = &self.data[(k * d + i) * d..(k * d + i + 1) * d];
                let mut inner = 0.0;
                for j in 0..d {
                    inner += row[j] * b[j];
                }
                acc += a[i] * inner;
            }
            acc
        })
    }

    /// Largest violation of the symmetry in the lower indices.
    pub fn asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for k in 0..d {
            for i in 0..d {
                for j in 0..i {
                    worst = worst.max((self.get(k, i, j) - self.get(k, j, i)).abs());
                }
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn embed(&mut self, block: &Christoffel, offset: usize) {
        let n = block.dim;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    self.set(offset + k, offset + i, offset + j, block.get(k, i, j));
                }
            }
        }
    }
}

/// A metric tensor field on chart coordinates.
pub trait MetricTensor: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn metric(&self, x: &[f64]) -> DMatrix<f64>;

    /// Closed-form Christoffel symbols, when known.
    fn christoffel(&self, _x: &[f64]) -> Option<Christoffel> {
        None
    }
}

/// Metrics that can be named in a manifold configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum BuiltinMetric {
    Euclidean {
        dim: usize,
    },
    /// Round sphere in (colatitude, longitude) coordinates.
    Sphere {
        #[serde(default = "unit")]
        radius: f64,
    },
    /// Upper half-plane model of the hyperbolic plane.
    Hyperbolic,
    Product {
        factors: Vec<BuiltinMetric>,
    },
}

fn unit() -> f64 {
    1.0
}

impl BuiltinMetric {
    fn factor_dims(&self) -> Vec<usize> {
        match self {
            BuiltinMetric::Product { factors } => factors.iter().map(|f| f.dim()).collect(),
            other => vec![other.dim()],
        }
    }
}

impl MetricTensor for BuiltinMetric {
    fn dim(&self) -> usize {
        match self {
            BuiltinMetric::Euclidean { dim } => *dim,
            BuiltinMetric::Sphere { .. } | BuiltinMetric::Hyperbolic => 2,
            BuiltinMetric::Product { factors } => factors.iter().map(|f| f.dim()).sum(),
        }
    }

    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            BuiltinMetric::Euclidean { dim } => DMatrix::identity(*dim, *dim),
            BuiltinMetric::Sphere { radius } => {
                let r2 = radius * radius;
                let s = x[0].sin();
                DMatrix::from_diagonal(&DVector::from_vec(vec![r2, r2 * s * s]))
            }
            BuiltinMetric::Hyperbolic => {
                let w = 1.0 / (x[1] * x[1]);
                DMatrix::from_diagonal(&DVector::from_vec(vec![w, w]))
            }
            BuiltinMetric::Product { factors } => {
                let n = self.dim();
                let mut g = DMatrix::zeros(n, n);
                let mut offset = 0;
                for f in factors {
                    let d = f.dim();
                    g.view_mut((offset, offset), (d, d))
                        .copy_from(&f.metric(&x[offset..offset + d]));
                    offset += d;
                }
                g
            }
        }
    }

    fn christoffel(&self, x: &[f64]) -> Option<Christoffel> {
        match self {
            BuiltinMetric::Euclidean { dim } => Some(Christoffel::zeros(*dim)),
            BuiltinMetric::Sphere { .. } => {
                let (s, c) = x[0].sin_cos();
                let mut gamma = Christoffel::zeros(2);
                gamma.set(0, 1, 1, -s * c);
                gamma.set_sym(1, 0, 1, c / s);
                Some(gamma)
            }
            BuiltinMetric::Hyperbolic => {
                let inv = 1.0 / x[1];
                let mut gamma = Christoffel::zeros(2);
                gamma.set_sym(0, 0, 1, -inv);
                gamma.set(1, 0, 0, inv);
                gamma.set(1, 1, 1, -inv);
                Some(gamma)
            }
            BuiltinMetric::Product { factors } => {
                let mut gamma = Christoffel::zeros(self.dim());
                let mut offset = 0;
                for f in factors {
                    let d = f.dim();
                    gamma.embed(&f.christoffel(&x[offset..offset + d])?, offset);
                    offset += d;
                }
                Some(gamma)
            }
        }
    }
}

/// Metric given by an arbitrary closure; Christoffels come from finite differences.
pub struct FnMetric {
    dim: usize,
    f: Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>,
}

impl FnMetric {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        Self { dim, f: Box::new(f) }
    }
}

impl fmt::Debug for FnMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnMetric").field("dim", &self.dim).finish()
    }
}

impl MetricTensor for FnMetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        (self.f)(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChristoffelMode {
    Analytic,
    FiniteDifference { h: f64 },
}

/// Config-file form of a manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldConfig {
    pub dim: usize,
    pub metric: BuiltinMetric,
    pub domain: DomainBox,
    /// Forces finite-difference Christoffels with this step when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_fd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convexity_radius: Option<f64>,
}

pub const DEFAULT_STEPS: usize = 64;

/// A Riemannian manifold described by one coordinate chart.
#[derive(Clone)]
pub struct ChartManifold {
    name: String,
    metric: Arc<dyn MetricTensor>,
    domain: DomainBox,
    christoffel_mode: ChristoffelMode,
    steps: usize,
    convexity_radius: f64,
    /// Dimensions of declared product factors, in coordinate order.
    factor_dims: Vec<usize>,
}

impl fmt::Debug for ChartManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartManifold")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("domain", &self.domain)
            .field("christoffel_mode", &self.christoffel_mode)
            .field("steps", &self.steps)
            .finish()
    }
}

impl ChartManifold {
    pub fn new(
        name: impl Into<String>,
        metric: Arc<dyn MetricTensor>,
        domain: DomainBox,
    ) -> Result<Self> {
        if metric.dim() != domain.dim() {
            return Err(Error::arg(format!(
                "metric has dimension {} but domain has dimension {}",
                metric.dim(),
                domain.dim()
            )));
        }
        let probe = domain.center();
        let mode = if metric.christoffel(probe.as_slice()).is_some() {
            ChristoffelMode::Analytic
        } else {
            ChristoffelMode::FiniteDifference {
                h: 1e-4 * domain.scale(),
            }
        };
        let dim = metric.dim();
        Ok(Self {
            name: name.into(),
            metric,
            domain,
            christoffel_mode: mode,
            steps: DEFAULT_STEPS,
            convexity_radius: 1.0,
            factor_dims: vec![dim],
        })
    }

    pub fn from_fn(
        name: impl Into<String>,
        dim: usize,
        domain: DomainBox,
        f: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(name, Arc::new(FnMetric::new(dim, f)), domain)
    }

    pub fn from_builtin(metric: BuiltinMetric, domain: DomainBox) -> Result<Self> {
        let name = builtin_name(&metric);
        let factor_dims = metric.factor_dims();
        let mut m = Self::new(name, Arc::new(metric), domain)?;
        m.factor_dims = factor_dims;
        Ok(m)
    }

    pub fn from_config(cfg: &ManifoldConfig) -> Result<Self> {
        if cfg.metric.dim() != cfg.dim {
            return Err(Error::Config(format!(
                "declared dim {} does not match metric dimension {}",
                cfg.dim,
                cfg.metric.dim()
            )));
        }
        let domain = DomainBox::new(cfg.domain.lower.clone(), cfg.domain.upper.clone())?;
        let mut m = Self::from_builtin(cfg.metric.clone(), domain)?;
        if let Some(h) = cfg.h_fd {
            m = m.with_finite_differences(h)?;
        }
        if let Some(steps) = cfg.steps {
            m = m.with_steps(steps)?;
        }
        if let Some(r) = cfg.convexity_radius {
            m = m.with_convexity_radius(r);
        }
        m.validate()?;
        Ok(m)
    }

    pub fn from_config_json(text: &str) -> Result<Self> {
        let cfg: ManifoldConfig = serde_json::from_str(text)?;
        Self::from_config(&cfg)
    }

    /// Flat `R^dim` on the cube `[-half_width, half_width]^dim`.
    pub fn euclidean(dim: usize, half_width: f64) -> Self {
        Self::from_builtin(BuiltinMetric::Euclidean { dim }, DomainBox::cube(dim, half_width))
            .expect("valid euclidean chart")
            .with_convexity_radius(half_width)
    }

    /// Round sphere of the given radius; the chart stays 0.2 away from the poles.
    pub fn sphere(radius: f64) -> Self {
        Self::from_builtin(BuiltinMetric::Sphere { radius }, sphere_domain())
            .expect("valid sphere chart")
            .with_convexity_radius(0.7 * radius)
    }

    pub fn hyperbolic() -> Self {
        Self::from_builtin(BuiltinMetric::Hyperbolic, hyperbolic_domain())
            .expect("valid hyperbolic chart")
            .with_convexity_radius(1.0)
    }

    /// Riemannian product of built-in factors with block-diagonal metric.
    pub fn product(factors: Vec<(BuiltinMetric, DomainBox)>) -> Result<Self> {
        let boxes: Vec<&DomainBox> = factors.iter().map(|(_, b)| b).collect();
        let domain = DomainBox::product(&boxes);
        let metric = BuiltinMetric::Product {
            factors: factors.iter().map(|(m, _)| m.clone()).collect(),
        };
        Self::from_builtin(metric, domain)
    }

    /// S² × R with the line coordinate last.
    pub fn sphere_times_line() -> Self {
        Self::product(vec![
            (BuiltinMetric::Sphere { radius: 1.0 }, sphere_domain()),
            (BuiltinMetric::Euclidean { dim: 1 }, DomainBox::cube(1, 10.0)),
        ])
        .expect("valid product chart")
        .with_convexity_radius(0.7)
    }

    pub fn sphere_times_sphere() -> Self {
        Self::product(vec![
            (BuiltinMetric::Sphere { radius: 1.0 }, sphere_domain()),
            (BuiltinMetric::Sphere { radius: 1.0 }, sphere_domain()),
        ])
        .expect("valid product chart")
        .with_convexity_radius(0.7)
    }

    pub fn with_steps(mut self, steps: usize) -> Result<Self> {
        if steps < 16 {
            return Err(Error::arg("integration needs at least 16 steps"));
        }
        self.steps = steps;
        Ok(self)
    }

    pub fn with_convexity_radius(mut self, r: f64) -> Self {
        self.convexity_radius = r;
        self
    }

    pub fn with_finite_differences(mut self, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::arg("finite-difference step must be positive"));
        }
        self.christoffel_mode = ChristoffelMode::FiniteDifference { h };
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn christoffel_mode(&self) -> ChristoffelMode {
        self.christoffel_mode
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Radius below which geodesic balls are treated as strictly convex.
    pub fn convexity_radius(&self) -> f64 {
        self.convexity_radius
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn metric_tensor(&self) -> &Arc<dyn MetricTensor> {
        &self.metric
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.domain.contains(x)
    }

    pub(crate) fn check_domain(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain { point: x.to_vec() })
        }
    }

    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_domain(x)?;
        Ok(self.metric.metric(x))
    }

    pub fn inner(&self, x: &[f64], a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        let g = self.metric_at(x)?;
        Ok(a.dot(&(g * b)))
    }

    pub fn norm_at(&self, x: &[f64], v: &DVector<f64>) -> Result<f64> {
        Ok(self.inner(x, v, v)?.max(0.0).sqrt())
    }

    /// Checks symmetry and positive definiteness of the metric on a coarse lattice of the domain.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let per_axis: usize = if d <= 3 { 5 } else { 3 };
        let total = per_axis.pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            let x: Vec<f64> = (0..d)
                .map(|a| {
                    let k = rem % per_axis;
                    rem /= per_axis;
                    let (l, u) = (self.domain.lower[a], self.domain.upper[a]);
                    l + (u - l) * (k as f64) / ((per_axis - 1) as f64)
                })
                .collect();
            let g = self.metric.metric(&x);
            let asym = (&g - g.transpose()).amax();
            if asym > 1e-12 {
                return Err(Error::Config(format!("metric not symmetric at {x:?}")));
            }
            let min_eig = g.symmetric_eigen().eigenvalues.min();
            if !(min_eig > 0.0) {
                return Err(Error::Config(format!("metric not positive definite at {x:?}")));
            }
        }
        Ok(())
    }
}

fn builtin_name(m: &BuiltinMetric) -> String {
    match m {
        BuiltinMetric::Euclidean { dim } => format!("euclidean-{dim}"),
        BuiltinMetric::Sphere { radius } if *radius == 1.0 => "sphere".into(),
        BuiltinMetric::Sphere { radius } => format!("sphere-r{radius}"),
        BuiltinMetric::Hyperbolic => "hyperbolic".into(),
        BuiltinMetric::Product { factors } => factors
            .iter()
            .map(builtin_name)
            .collect::<Vec<_>>()
            .join("x"),
    }
}

/// Colatitude kept 0.2 away from both poles; longitude may wind twice.
pub fn sphere_domain() -> DomainBox {
    DomainBox {
        lower: vec![0.2, -2.0 * PI],
        upper: vec![PI - 0.2, 2.0 * PI],
    }
}

pub fn hyperbolic_domain() -> DomainBox {
    DomainBox {
        lower: vec![-20.0, 0.02],
        upper: vec![20.0, 50.0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_builds_product() {
        let text = r#"{
            "dim": 3,
            "metric": {"name": "product", "factors": [{"name": "sphere"}, {"name": "euclidean", "dim": 1}]},
            "domain": {"lower": [0.2, -3.0, -5.0], "upper": [2.9, 3.0, 5.0]}
        }"#;
        let m = ChartManifold::from_config_json(text).unwrap();
        assert_eq!(m.dim(), 3);
        assert_eq!(m.factor_dims(), &[2, 1]);
        assert_eq!(m.christoffel_mode(), ChristoffelMode::Analytic);
        let g = m.metric_at(&[PI / 2.0, 0.0, 1.0]).unwrap();
        assert!((g[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_rejects_dim_mismatch() {
        let text = r#"{"dim": 3, "metric": {"name": "hyperbolic"},
            "domain": {"lower": [0, 1], "upper": [1, 2]}}"#;
        assert!(matches!(
            ChartManifold::from_config_json(text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_h_fd_forces_finite_differences() {
        let text = r#"{"dim": 2, "metric": {"name": "hyperbolic"},
            "domain": {"lower": [-1, 0.5], "upper": [1, 3]}, "h_fd": 1e-4}"#;
        let m = ChartManifold::from_config_json(text).unwrap();
        assert_eq!(
            m.christoffel_mode(),
            ChristoffelMode::FiniteDifference { h: 1e-4 }
        );
    }

    #[test]
    fn validate_catches_indefinite_metric() {
        let m = ChartManifold::from_fn("bad", 2, DomainBox::cube(2, 1.0), |x| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, x[0]]))
        })
        .unwrap();
        assert!(m.validate().is_err());
    }

    #[test]
    fn domain_checks() {
        let m = ChartManifold::sphere(1.0);
        assert!(m.metric_at(&[0.1, 0.0]).is_err());
        assert!(m.metric_at(&[1.0, 0.0]).is_ok());
        assert!(DomainBox::new(vec![0.0], vec![0.0]).is_err());
    }
}
