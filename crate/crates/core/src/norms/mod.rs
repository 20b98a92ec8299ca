//! Semi-norms on a tangent space (in orthonormal-frame coordinates), their
//! log-distance, holonomy averaging, orbit-hull and block-sum constructions,
//! Minkowski smoothing and section restriction.

mod grid;
mod hull;
mod smooth;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holonomy::{HolonomySample, SplittingReport};
use crate::linalg::random_unit;

pub use grid::SphereGrid;
pub use smooth::{minkowski_check, minkowski_check_at, minkowski_smooth, MinkowskiReport, SmoothedNorm, SMOOTH_TOL};

/// Default sphere-grid resolution (720 directions in dimension 2).
pub const DEFAULT_GRID: usize = 720;
/// Values below this fraction of the largest grid value count as zero.
const ZERO_FLOOR: f64 = 1e-12;
const PROPERTY_SEED: u64 = 0x9e37_79b9;

pub type NormFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Seminorm,
    Norm,
    MinkowskiCandidate,
}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A semi-norm with values cached on a unit-sphere grid.
#[derive(Clone)]
pub struct NormField {
    dim: usize,
    eval: NormFn,
    kind: NormKind,
    grid: Arc<SphereGrid>,
    values: Arc<Vec<f64>>,
    label: String,
    warning: Option<String>,
}

impl fmt::Debug for NormField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormField")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("grid_points", &self.grid.len())
            .field("warning", &self.warning)
            .finish()
    }
}

impl NormField {
    /// Builds a norm field and evaluates it on a fresh grid of resolution `n_grid`.
    ///
    /// A field declared as a norm that vanishes somewhere on the grid is
    /// downgraded to a seminorm with a warning.
    pub fn new(
        dim: usize,
        kind: NormKind,
        n_grid: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::with_grid(dim, kind, Arc::new(SphereGrid::new(dim, n_grid)), Arc::new(f))
    }

    pub fn with_grid(dim: usize, kind: NormKind, grid: Arc<SphereGrid>, eval: NormFn) -> Self {
        assert_eq!(grid.dim(), dim, "grid dimension must match the norm");
        let values: Vec<f64> = grid
            .flat()
            .par_chunks_exact(dim)
            .map(|u| eval(u))
            .collect();
        let max = values.iter().copied().fold(0.0, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let (kind, warning) = if kind != NormKind::Seminorm && !(min > ZERO_FLOOR * max) {
            (
                NormKind::Seminorm,
                Some("declared norm vanishes on the grid; treated as a seminorm".to_string()),
            )
        } else {
            (kind, None)
        };
        Self {
            dim,
            eval,
            kind,
            grid,
            values: Arc::new(values),
            label: "custom".to_string(),
            warning,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub(crate) fn with_warning(mut self, warning: impl Into<String>) -> Self {
        self.warning = Some(warning.into());
        self
    }

    /// The same evaluator on a grid of different resolution.
    pub fn regrid(&self, n_grid: usize) -> Self {
        Self::with_grid(
            self.dim,
            self.kind,
            Arc::new(SphereGrid::new(self.dim, n_grid)),
            Arc::clone(&self.eval),
        )
        .with_label(self.label.clone())
    }

    pub fn euclidean(dim: usize, n_grid: usize) -> Self {
        Self::new(dim, NormKind::Norm, n_grid, euclid).with_label("euclidean")
    }

    pub fn scaled_euclidean(dim: usize, c: f64, n_grid: usize) -> Self {
        Self::new(dim, NormKind::Norm, n_grid, move |v| c * euclid(v)).with_label(format!("{c}·euclidean"))
    }

    pub fn l1(dim: usize, n_grid: usize) -> Self {
        Self::new(dim, NormKind::Norm, n_grid, |v| v.iter().map(|x| x.abs()).sum()).with_label("l1")
    }

    pub fn linf(dim: usize, n_grid: usize) -> Self {
        Self::new(dim, NormKind::Norm, n_grid, |v| v.iter().fold(0.0, |m, x| m.max(x.abs())))
            .with_label("linf")
    }

    pub fn lp(dim: usize, p: f64, n_grid: usize) -> Self {
        assert!(p >= 1.0, "ℓp needs p ≥ 1");
        Self::new(dim, NormKind::Norm, n_grid, move |v| {
            v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
        })
        .with_label(format!("l{p}"))
    }

    /// `v ↦ q(Mv)`; a norm when `M` is invertible.
    pub fn pullback(q: &NormField, m: &DMatrix<f64>, n_grid: usize) -> Self {
        let inner = Arc::clone(&q.eval);
        let m = m.clone();
        let kind = q.kind;
        Self::new(m.ncols(), kind, n_grid, move |v| {
            let w = &m * DVector::from_column_slice(v);
            inner(w.as_slice())
        })
        .with_label(format!("pullback({})", q.label))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    pub(crate) fn grid_arc(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    /// Cached values, aligned with `grid()`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn evaluator(&self) -> NormFn {
        Arc::clone(&self.eval)
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        (self.eval)(v)
    }

    pub fn eval_vec(&self, v: &DVector<f64>) -> f64 {
        (self.eval)(v.as_slice())
    }

    /// Sampled homogeneity and midpoint-convexity defects.
    pub fn property_residuals(&self, n_samples: usize) -> NormProperties {
        let mut rng = ChaCha8Rng::seed_from_u64(PROPERTY_SEED);
        let mut homogeneity: f64 = 0.0;
        let mut convexity: f64 = 0.0;
        for _ in 0..n_samples {
            let u = random_unit(&mut rng, self.dim) * 1.7;
            let v = random_unit(&mut rng, self.dim) * 0.6;
            let qu = self.eval_vec(&u);
            for lambda in [-2.0, -1.0, 0.5, 3.0] {
                let lhs = self.eval_vec(&(&u * lambda));
                let rhs = f64::abs(lambda) * qu;
                homogeneity = homogeneity.max((lhs - rhs).abs() / rhs.max(1e-300));
            }
            let mid = self.eval_vec(&((&u + &v) * 0.5));
            convexity = convexity.max(mid - 0.5 * (qu + self.eval_vec(&v)));
        }
        NormProperties {
            homogeneity,
            convexity: convexity.max(0.0),
            min_grid_value: self.values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Writes `x0,…,x{d−1},value` rows for every grid direction.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        header.push("value".into());
        out.write_record(&header).map_err(csv_err)?;
        for (u, v) in self.grid.iter().zip(self.values.iter()) {
            let mut row: Vec<String> = u.iter().map(|x| format!("{x:.12e}")).collect();
            row.push(format!("{v:.12e}"));
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormProperties {
    pub homogeneity: f64,
    pub convexity: f64,
    pub min_grid_value: f64,
}

fn check_same_dim(a: &NormField, b: &NormField) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::arg(format!("norm dimensions differ: {} vs {}", a.dim, b.dim)));
    }
    Ok(())
}

fn positive_log(x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x.ln())
    } else {
        Err(Error::Seminorm)
    }
}

/// Values of both norms on a common grid (the finer of the two).
fn common_values(q1: &NormField, q2: &NormField) -> (Vec<f64>, Vec<f64>) {
    if Arc::ptr_eq(&q1.grid, &q2.grid) || *q1.grid == *q2.grid {
        return (q1.values.to_vec(), q2.values.to_vec());
    }
    let (fine, coarse) = if q1.grid.len() >= q2.grid.len() { (q1, q2) } else { (q2, q1) };
    let other: Vec<f64> = fine
        .grid
        .flat()
        .par_chunks_exact(fine.dim)
        .map(|u| coarse.eval(u))
        .collect();
    if std::ptr::eq(fine, q1) {
        (fine.values.to_vec(), other)
    } else {
        (other, fine.values.to_vec())
    }
}

/// `max |log(q1(u)/q2(u))|` over grid directions.
pub fn norm_distance(q1: &NormField, q2: &NormField) -> Result<f64> {
    check_same_dim(q1, q2)?;
    if q1.kind == NormKind::Seminorm || q2.kind == NormKind::Seminorm {
        return Err(Error::Seminorm);
    }
    let (a, b) = common_values(q1, q2);
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(&b) {
        worst = worst.max((positive_log(*x)? - positive_log(*y)?).abs());
    }
    Ok(worst)
}

/// Distance to the closest multiple `c·|·|` of the Euclidean norm, and that `c`.
pub fn euclidean_fit(q: &NormField) -> Result<(f64, f64)> {
    if q.kind == NormKind::Seminorm {
        return Err(Error::Seminorm);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in q.values.iter() {
        let l = positive_log(*v)?;
        lo = lo.min(l);
        hi = hi.max(l);
    }
    Ok((0.5 * (hi - lo), (0.5 * (hi + lo)).exp()))
}

/// `min_c norm_distance(q, c·|·|)`.
pub fn distance_to_euclidean(q: &NormField) -> Result<f64> {
    euclidean_fit(q).map(|(d, _)| d)
}

fn check_sample(q: &NormField, s: &HolonomySample) -> Result<()> {
    if s.is_empty() {
        return Err(Error::arg("holonomy sample has no elements"));
    }
    if s.dim() != q.dim {
        return Err(Error::arg(format!(
            "sample acts on dimension {} but the norm has dimension {}",
            s.dim(),
            q.dim
        )));
    }
    Ok(())
}

/// `v ↦ mean_A q(A v)` over the sample elements.
pub fn average_norm(q: &NormField, s: &HolonomySample) -> Result<NormField> {
    check_sample(q, s)?;
    let inner = Arc::clone(&q.eval);
    let mats = Arc::new(s.elements.clone());
    let f = move |v: &[f64]| {
        let v = DVector::from_column_slice(v);
        let total: f64 = mats.iter().map(|a| inner((a * &v).as_slice())).sum();
        total / mats.len() as f64
    };
    Ok(
        NormField::with_grid(q.dim, q.kind, Arc::clone(&q.grid), Arc::new(f))
            .with_label(format!("average({})", q.label)),
    )
}

/// `max |log(q(Au)/q(u))|` over grid directions `u` and elements `A`.
pub fn invariance_residual(q: &NormField, s: &HolonomySample) -> Result<f64> {
    check_sample(q, s)?;
    let d = q.dim;
    let per_point: Vec<Result<f64>> = q
        .grid
        .flat()
        .par_chunks_exact(d)
        .zip(q.values.par_iter())
        .map(|(u, qu)| {
            let lu = positive_log(*qu)?;
            let u = DVector::from_column_slice(u);
            let mut worst: f64 = 0.0;
            for a in &s.elements {
                worst = worst.max((positive_log(q.eval_vec(&(a * &u)))? - lu).abs());
            }
            Ok(worst)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r in per_point {
        worst = worst.max(r?);
    }
    Ok(worst)
}

/// Gauge of the symmetrized convex hull of `{±A·seed}`.
///
/// When the hull is not full-dimensional the result is the gauge of the hull
/// inside its span composed with orthogonal projection, flagged as a seminorm.
pub fn orbit_hull_norm(s: &HolonomySample, seed: &DVector<f64>, n_grid: usize) -> Result<NormField> {
    if s.is_empty() {
        return Err(Error::arg("holonomy sample has no elements"));
    }
    if seed.len() != s.dim() || seed.norm() == 0.0 {
        return Err(Error::arg("seed must be a non-zero vector of the sample dimension"));
    }
    let seed = seed / seed.norm();
    let points: Vec<DVector<f64>> = s.elements.iter().map(|a| a * &seed).collect();
    let gauge = hull::HullGauge::new(&points);
    let rank = gauge.rank();
    let d = s.dim();
    let kind = if rank == d { NormKind::Norm } else { NormKind::Seminorm };
    let field = NormField::new(d, kind, n_grid, move |v| gauge.eval(v)).with_label("orbit_hull");
    Ok(if rank < d {
        field.with_warning(format!("orbit hull has rank {rank} < {d}; result is a seminorm"))
    } else {
        field
    })
}

/// `v ↦ Σ_i q_i(B_iᵀ v)` for the block bases `B_i` of `split`.
pub fn block_sum_norm(split: &SplittingReport, block_norms: &[NormField], n_grid: usize) -> Result<NormField> {
    if block_norms.len() != split.subspace_bases.len() {
        return Err(Error::arg(format!(
            "{} block norms for {} blocks",
            block_norms.len(),
            split.subspace_bases.len()
        )));
    }
    for (b, q) in split.subspace_bases.iter().zip(block_norms) {
        if b.ncols() != q.dim {
            return Err(Error::arg(format!(
                "block of dimension {} paired with a norm of dimension {}",
                b.ncols(),
                q.dim
            )));
        }
    }
    let d = split.dim();
    if block_norms.len() == 1 && split.subspace_bases[0] == DMatrix::identity(d, d) {
        return Ok(block_norms[0].clone());
    }
    let parts: Vec<(DMatrix<f64>, NormFn)> = split
        .subspace_bases
        .iter()
        .zip(block_norms)
        .map(|(b, q)| (b.transpose(), Arc::clone(&q.eval)))
        .collect();
    let kind = if block_norms.iter().all(|q| q.kind != NormKind::Seminorm) {
        NormKind::Norm
    } else {
        NormKind::Seminorm
    };
    let f = move |v: &[f64]| {
        let v = DVector::from_column_slice(v);
        parts.iter().map(|(bt, q)| q((bt * &v).as_slice())).sum()
    };
    Ok(NormField::new(d, kind, n_grid, f).with_label("block_sum"))
}

/// `x ↦ q(Bx)` on the section spanned by the orthonormal columns of `basis`.
pub fn restrict_norm_to_section(q: &NormField, basis: &DMatrix<f64>, n_grid: usize) -> Result<NormField> {
    if basis.nrows() != q.dim {
        return Err(Error::arg("section basis rows must match the norm dimension"));
    }
    let k = basis.ncols();
    if (basis.transpose() * basis - DMatrix::<f64>::identity(k, k)).amax() > 1e-9 {
        return Err(Error::arg("section basis must have orthonormal columns"));
    }
    Ok(NormField::pullback(q, basis, n_grid).with_label(format!("section({})", q.label)))
}

/// Extends a norm on a section meeting every block in one axis: `v ↦ q̄(|Π_1 v|, …, |Π_k v|)`.
pub fn extend_from_section(section_norm: &NormField, split: &SplittingReport, n_grid: usize) -> Result<NormField> {
    if section_norm.dim != split.subspace_bases.len() {
        return Err(Error::arg("section dimension must equal the number of blocks"));
    }
    let inner = Arc::clone(&section_norm.eval);
    let bases: Vec<DMatrix<f64>> = split.subspace_bases.iter().map(|b| b.transpose()).collect();
    let f = move |v: &[f64]| {
        let v = DVector::from_column_slice(v);
        let radii: Vec<f64> = bases.iter().map(|bt| (bt * &v).norm()).collect();
        inner(&radii)
    };
    Ok(NormField::new(split.dim(), section_norm.kind, n_grid, f).with_label("section_extension"))
}
