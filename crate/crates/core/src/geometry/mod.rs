//! Chart-based Riemannian manifolds: Christoffel symbols, geodesics, parallel
//! transport, exponential and logarithm maps.

mod curve;
mod flow;
mod log;
mod manifold;

use nalgebra::{DMatrix, DVector};

pub use curve::{Curve, CurveKind, CurveNode};
pub use flow::{
    christoffel, exp, exp_with_steps, finite_difference_christoffel, integrate_geodesic,
    parallel_transport, speed_drift, transport_along, transport_frames_along,
};
pub use log::{riemannian_log, riemannian_log_with_steps};
pub use manifold::{
    hyperbolic_domain, sphere_domain, BuiltinMetric, ChartManifold, Christoffel, ChristoffelMode,
    DomainBox, FnMetric, ManifoldConfig, MetricTensor, Point, DEFAULT_STEPS,
};

use crate::error::{Error, Result};

/// A tangent vector: base point and chart components.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub components: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: Point, components: DVector<f64>) -> Self {
        Self { base, components }
    }

    pub fn from_slices(base: &[f64], components: &[f64]) -> Self {
        Self::new(
            DVector::from_column_slice(base),
            DVector::from_column_slice(components),
        )
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.base.clone(), &self.components * s)
    }

    pub(crate) fn check_dim(&self, m: &ChartManifold) -> Result<()> {
        if self.base.len() != m.dim() || self.components.len() != m.dim() {
            Err(Error::arg(format!(
                "tangent vector has dimension {} but manifold has {}",
                self.components.len(),
                m.dim()
            )))
        } else {
            Ok(())
        }
    }
}

/// Columns form a `g_p`-orthonormal basis: `Fᵀ g F = I`, with `F = L⁻ᵀ` for the
/// Cholesky factor `g = L Lᵀ`.
pub fn orthonormal_frame(m: &ChartManifold, p: &[f64]) -> Result<DMatrix<f64>> {
    let g = m.metric_at(p)?;
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Domain { point: p.to_vec() })?;
    let l_inv = chol
        .l()
        .try_inverse()
        .expect("Cholesky factor of a positive definite matrix is invertible");
    Ok(l_inv.transpose())
}

/// Coordinates of chart vector `v` in the orthonormal frame at `p`.
pub fn to_frame_coords(m: &ChartManifold, p: &[f64], v: &DVector<f64>) -> Result<DVector<f64>> {
    let g = m.metric_at(p)?;
    let f = orthonormal_frame(m, p)?;
    Ok(f.transpose() * g * v)
}

/// Chart components of the vector with frame coordinates `c` at `p`.
pub fn from_frame_coords(m: &ChartManifold, p: &[f64], c: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(orthonormal_frame(m, p)? * c)
}
