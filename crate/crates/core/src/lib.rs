//! Numerical toolkit for affine maps out of Riemannian manifolds: geodesics and
//! parallel transport on chart manifolds, holonomy sampling and splitting,
//! holonomy-invariant norms, and metric differentials of maps into metric spaces.

pub mod affine;
pub mod error;
pub mod geometry;
pub mod holonomy;
pub mod linalg;
pub mod norms;
pub mod scenarios;

pub use error::{Error, Result};
pub use geometry::{ChartManifold, Curve, CurveKind, TangentVector};
pub use holonomy::HolonomySample;
