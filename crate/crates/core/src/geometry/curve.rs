use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Geodesic,
    /// Concatenation of geodesic pieces.
    Polygon,
    Generic,
}

/// A sampled point of a curve. `velocity` is the right derivative, except at the
/// final node where it is the left derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveNode {
    pub t: f64,
    pub point: Point,
    pub velocity: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    nodes: Vec<CurveNode>,
    kind: CurveKind,
}

impl Curve {
    pub fn new(nodes: Vec<CurveNode>, kind: CurveKind) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::arg("a curve needs at least two nodes"));
        }
        let dim = nodes[0].point.len();
        if nodes
            .iter()
            .any(|n| n.point.len() != dim || n.velocity.len() != dim)
        {
            return Err(Error::arg("curve nodes have inconsistent dimensions"));
        }
        if nodes.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::arg("curve parameters must be strictly increasing"));
        }
        Ok(Self { nodes, kind })
    }

    /// Joins geodesic pieces end to start. Each piece's final node is replaced by
    /// the next piece's first node, and parameters are shifted to run continuously.
    pub fn polygon(pieces: Vec<Curve>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::arg("polygon needs at least one piece"));
        }
        let count = pieces.len();
        let mut nodes = Vec::new();
        let mut offset = 0.0;
        for (idx, piece) in pieces.into_iter().enumerate() {
            if piece.kind == CurveKind::Generic {
                return Err(Error::arg("polygon pieces must be geodesic"));
            }
            let t0 = piece.nodes[0].t;
            let t_last = piece.nodes.last().map(|n| n.t).unwrap_or(t0);
            let keep = if idx + 1 == count {
                piece.nodes.len()
            } else {
                piece.nodes.len() - 1
            };
            for node in piece.nodes.into_iter().take(keep) {
                nodes.push(CurveNode {
                    t: node.t - t0 + offset,
                    ..node
                });
            }
            offset += t_last - t0;
        }
        Self::new(nodes, CurveKind::Polygon)
    }

    pub fn nodes(&self) -> &[CurveNode] {
        &self.nodes
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].point.len()
    }

    pub fn start(&self) -> &CurveNode {
        &self.nodes[0]
    }

    pub fn end(&self) -> &CurveNode {
        self.nodes.last().expect("curve has nodes")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(|n| n.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(t: f64, x: f64) -> CurveNode {
        CurveNode {
            t,
            point: DVector::from_vec(vec![x]),
            velocity: DVector::from_vec(vec![1.0]),
        }
    }

    #[test]
    fn rejects_non_increasing_parameters() {
        assert!(Curve::new(vec![node(0.0, 0.0), node(0.0, 1.0)], CurveKind::Generic).is_err());
        assert!(Curve::new(vec![node(0.0, 0.0)], CurveKind::Generic).is_err());
    }

    #[test]
    fn polygon_shifts_parameters() {
        let a = Curve::new(vec![node(0.0, 0.0), node(1.0, 1.0)], CurveKind::Geodesic).unwrap();
        let b = Curve::new(vec![node(0.0, 1.0), node(0.5, 1.5), node(1.0, 2.0)], CurveKind::Geodesic)
            .unwrap();
        let p = Curve::polygon(vec![a, b]).unwrap();
        let ts: Vec<f64> = p.parameters().collect();
        assert_eq!(ts, vec![0.0, 1.0, 1.5, 2.0]);
        assert_eq!(p.kind(), CurveKind::Polygon);
    }
}
