//! Shared fixtures for the benchmarks.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use geoaffine::affine::{dist, MapOracle};
use geoaffine::{ChartManifold, TangentVector};

/// Unit tangent at an equator point of the round sphere, tilted towards the pole.
pub fn sphere_start() -> TangentVector {
    TangentVector::from_slices(&[FRAC_PI_2, 0.0], &[-0.5f64.sin(), 0.5f64.cos()])
}

/// Identity of the plane into (R², ℓ∞).
pub fn plane_linf() -> MapOracle {
    MapOracle::identity(Arc::new(ChartManifold::euclidean(2, 10.0)), "linf", dist::linf())
}
