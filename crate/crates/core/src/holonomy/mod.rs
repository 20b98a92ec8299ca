//! Holonomy sampling at a base point: transported frames around geodesic
//! triangles, closure under products, transitivity on the unit sphere and the
//! invariant-subspace splitting.

mod sample;
mod splitting;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::geometry::{Curve, Point};

pub use sample::{
    group_closure, group_closure_with_limit, sample_holonomy, triangle_holonomy,
    DEFAULT_CLOSURE_LIMIT,
};
pub use splitting::{
    invariant_subspaces, transitivity_test, SplittingReport, TransitivityReport, Verdict,
};

/// A geodesic triangle `p → q → r → p` used to generate one holonomy element.
#[derive(Clone, Debug)]
pub struct LoopInfo {
    pub vertices: [Point; 3],
    pub curve: Curve,
}

#[derive(Clone, Debug)]
pub enum ElementOrigin {
    Identity,
    Loop(Arc<LoopInfo>),
    /// Product of earlier elements; `true` marks an inverted factor.
    Product(Vec<(usize, bool)>),
    /// Supplied directly as a matrix.
    Given,
}

/// Finite set of holonomy matrices written in an orthonormal frame at `base`.
#[derive(Clone, Debug)]
pub struct HolonomySample {
    pub base: Point,
    pub frame: DMatrix<f64>,
    pub elements: Vec<DMatrix<f64>>,
    pub origins: Vec<ElementOrigin>,
    pub generation_depth: usize,
    /// Set when closure stopped at the element limit.
    pub truncated: bool,
}

impl HolonomySample {
    /// Wraps explicit orthogonal matrices; the identity is prepended when missing.
    pub fn from_matrices(elements: Vec<DMatrix<f64>>) -> Self {
        assert!(!elements.is_empty(), "at least one matrix is required");
        let n = elements[0].nrows();
        let id = DMatrix::identity(n, n);
        let mut out = Self {
            base: Point::zeros(n),
            frame: id.clone(),
            elements: Vec::with_capacity(elements.len() + 1),
            origins: Vec::new(),
            generation_depth: 1,
            truncated: false,
        };
        if !elements.iter().any(|a| (a - &id).norm() <= 1e-12) {
            out.elements.push(id);
            out.origins.push(ElementOrigin::Identity);
        }
        for a in elements {
            out.elements.push(a);
            out.origins.push(ElementOrigin::Given);
        }
        out
    }

    /// `n` equally spaced planar rotations `k · 2π / n`.
    pub fn cyclic_rotations(n: usize) -> Self {
        let mats = (0..n)
            .map(|k| rotation2(2.0 * std::f64::consts::PI * k as f64 / n as f64))
            .collect();
        Self::from_matrices(mats)
    }

    pub fn dim(&self) -> usize {
        self.frame.nrows()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `max ‖AᵀA − I‖_F` over the elements.
    pub fn orthogonality_residual(&self) -> f64 {
        let n = self.dim();
        let id = DMatrix::<f64>::identity(n, n);
        self.elements
            .iter()
            .map(|a| (a.transpose() * a - &id).norm())
            .fold(0.0, f64::max)
    }

    /// `max |det A − 1|` over the elements.
    pub fn determinant_residual(&self) -> f64 {
        self.elements
            .iter()
            .map(|a| (a.determinant() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn summary(&self, t: &TransitivityReport, split: &SplittingReport) -> HolonomySummary {
        HolonomySummary {
            verdict: t.verdict,
            coverage_score: t.coverage_score,
            block_dims: split.block_dims.clone(),
            fixed_dim: split.fixed_dim,
            orthogonality_residual: self.orthogonality_residual(),
            elements: self.len(),
        }
    }
}

pub fn rotation2(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Angle of a 2×2 rotation block.
pub fn rotation_angle(a: &DMatrix<f64>) -> f64 {
    a[(1, 0)].atan2(a[(0, 0)])
}

/// Serialized holonomy summary embedded in scenario reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomySummary {
    pub verdict: Verdict,
    pub coverage_score: f64,
    pub block_dims: Vec<usize>,
    pub fixed_dim: usize,
    pub orthogonality_residual: f64,
    pub elements: usize,
}

#[cfg(test)]
mod tests;
