use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ElementOrigin, HolonomySample, LoopInfo};
use crate::error::{Error, Result};
use crate::linalg::random_unit;
use crate::geometry::{
    exp, integrate_geodesic, orthonormal_frame, riemannian_log, transport_frames_along,
    ChartManifold, Curve, Point, TangentVector,
};

pub const DEFAULT_CLOSURE_LIMIT: usize = 4096;
const DEDUP_DISTANCE: f64 = 1e-6;
const LOG_TOL: f64 = 1e-12;

/// Holonomy of the geodesic triangle `p → q → r → p`, expressed in `frame`.
pub fn triangle_holonomy(
    m: &ChartManifold,
    p: &Point,
    q: &Point,
    r: &Point,
) -> Result<(DMatrix<f64>, LoopInfo)> {
    let steps = m.steps();
    let mut pieces = Vec::with_capacity(3);
    for (a, b) in [(p, q), (q, r), (r, p)] {
        let v = riemannian_log(m, a, b, LOG_TOL)?;
        pieces.push(integrate_geodesic(m, &v, 1.0, steps)?);
    }
    let curve = Curve::polygon(pieces)?;
    let frame = orthonormal_frame(m, p.as_slice())?;
    let g = m.metric_at(p.as_slice())?;
    let moved = transport_frames_along(m, &curve, &frame)?
        .pop()
        .expect("curve has nodes");
    let a = frame.transpose() * g * moved;
    let info = LoopInfo {
        vertices: [p.clone(), q.clone(), r.clone()],
        curve,
    };
    Ok((a, info))
}

/// Samples `n_loops` holonomy elements from geodesic triangles at `p` whose first
/// two legs have length `scale` in seeded random directions.
pub fn sample_holonomy(
    m: &ChartManifold,
    p: &Point,
    n_loops: usize,
    scale: f64,
    seed: u64,
) -> Result<HolonomySample> {
    if n_loops == 0 {
        return Err(Error::arg("n_loops must be at least 1"));
    }
    if !(scale > 0.0) {
        return Err(Error::arg("loop scale must be positive"));
    }
    let d = m.dim();
    let frame = orthonormal_frame(m, p.as_slice())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = HolonomySample {
        base: p.clone(),
        frame: frame.clone(),
        elements: vec![DMatrix::identity(d, d)],
        origins: vec![ElementOrigin::Identity],
        generation_depth: 1,
        truncated: false,
    };
    let max_attempts = 10 * n_loops + 20;
    let mut attempts = 0;
    while sample.elements.len() < n_loops + 1 {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Sampling(format!(
                "only {} of {n_loops} loops stayed inside the chart",
                sample.elements.len() - 1
            )));
        }
        let u1 = random_unit(&mut rng, d);
        let u2 = random_unit(&mut rng, d);
        // Thin triangles carry almost no holonomy; redraw them.
        if u1.dot(&u2).abs() > 0.95 {
            continue;
        }
        let q = exp(m, &TangentVector::new(p.clone(), &frame * u1 * scale));
        let r = exp(m, &TangentVector::new(p.clone(), &frame * u2 * scale));
        let (Ok(q), Ok(r)) = (q, r) else { continue };
        if let Ok((a, info)) = triangle_holonomy(m, p, &q, &r) {
            sample.elements.push(a);
            sample.origins.push(ElementOrigin::Loop(Arc::new(info)));
        }
    }
    Ok(sample)
}

fn contains_close(list: &[DMatrix<f64>], a: &DMatrix<f64>) -> bool {
    list.iter().any(|b| (b - a).norm() <= DEDUP_DISTANCE)
}

/// Adds all products of at most `depth` factors drawn from the elements and
/// their inverses, deduplicated at Frobenius distance 1e-6.
pub fn group_closure(s: &HolonomySample, depth: usize) -> Result<HolonomySample> {
    group_closure_with_limit(s, depth, DEFAULT_CLOSURE_LIMIT)
}

pub fn group_closure_with_limit(
    s: &HolonomySample,
    depth: usize,
    limit: usize,
) -> Result<HolonomySample> {
    if depth == 0 {
        return Err(Error::arg("closure depth must be at least 1"));
    }
    if s.is_empty() {
        return Err(Error::arg("cannot close an empty sample"));
    }
    let mut gens: Vec<(DMatrix<f64>, (usize, bool))> = Vec::new();
    for (i, a) in s.elements.iter().enumerate() {
        gens.push((a.clone(), (i, false)));
        let inv = a.transpose();
        if (&inv - a).norm() > DEDUP_DISTANCE {
            gens.push((inv, (i, true)));
        }
    }

    let mut elements: Vec<DMatrix<f64>> = Vec::new();
    let mut origins: Vec<ElementOrigin> = Vec::new();
    let mut words: Vec<Vec<(usize, bool)>> = Vec::new();
    for (i, (a, o)) in s.elements.iter().zip(&s.origins).enumerate() {
        if !contains_close(&elements, a) {
            elements.push(a.clone());
            origins.push(o.clone());
            words.push(vec![(i, false)]);
        }
    }
    for (a, tag) in &gens {
        if tag.1 && !contains_close(&elements, a) {
            elements.push(a.clone());
            origins.push(ElementOrigin::Product(vec![*tag]));
            words.push(vec![*tag]);
        }
    }

    let mut frontier: Vec<usize> = (0..elements.len()).collect();
    let mut truncated = false;
    'levels: for _ in 2..=depth {
        let mut next = Vec::new();
        for &idx in &frontier {
            for (g, tag) in &gens {
                let prod = &elements[idx] * g;
                if contains_close(&elements, &prod) {
                    continue;
                }
                if elements.len() >= limit {
                    truncated = true;
                    break 'levels;
                }
                let mut word = words[idx].clone();
                word.push(*tag);
                elements.push(prod);
                origins.push(ElementOrigin::Product(word.clone()));
                words.push(word);
                next.push(elements.len() - 1);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }

    Ok(HolonomySample {
        base: s.base.clone(),
        frame: s.frame.clone(),
        elements,
        origins,
        generation_depth: s.generation_depth.max(1) * depth,
        truncated: truncated || s.truncated,
    })
}
