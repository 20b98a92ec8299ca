//! Closed-form distances on target spaces.

use std::ops::Range;
use std::sync::Arc;

pub type Distance = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

pub fn euclidean() -> Distance {
    Arc::new(|a, b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

pub fn l1() -> Distance {
    Arc::new(|a, b| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

pub fn linf() -> Distance {
    Arc::new(|a, b| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// `(Σ √|Δ_i|)²`: fails the triangle inequality.
pub fn sqrt_sum_squared() -> Distance {
    Arc::new(|a, b| {
        let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs().sqrt()).sum();
        s * s
    })
}

fn sphere_point(x: &[f64]) -> [f64; 3] {
    let (st, ct) = x[0].sin_cos();
    let (sp, cp) = x[1].sin_cos();
    [st * cp, st * sp, ct]
}

/// Great-circle distance between (colatitude, longitude) labels.
pub fn great_circle(radius: f64) -> Distance {
    Arc::new(move |a, b| {
        let (p, q) = (sphere_point(a), sphere_point(b));
        let cross = [
            p[1] * q[2] - p[2] * q[1],
            p[2] * q[0] - p[0] * q[2],
            p[0] * q[1] - p[1] * q[0],
        ];
        let s = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        let c = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
        radius * s.atan2(c)
    })
}

/// Upper half-plane distance.
pub fn hyperbolic() -> Distance {
    Arc::new(|a, b| {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        let q = (dx * dx + dy * dy) / (4.0 * a[1] * b[1]);
        // arccosh(1 + 2q) = 2 asinh(√q), stable for nearby points.
        2.0 * q.sqrt().asinh()
    })
}

pub fn scaled(d: Distance, a: f64) -> Distance {
    Arc::new(move |x, y| a * d(x, y))
}

/// Sum of factor distances on coordinate blocks of the labels.
pub fn block_sum(parts: Vec<(Range<usize>, Distance)>) -> Distance {
    Arc::new(move |x, y| parts.iter().map(|(r, d)| d(&x[r.clone()], &y[r.clone()])).sum())
}

/// Riemannian product distance: root of the sum of squared factor distances.
pub fn block_l2(parts: Vec<(Range<usize>, Distance)>) -> Distance {
    Arc::new(move |x, y| {
        parts
            .iter()
            .map(|(r, d)| d(&x[r.clone()], &y[r.clone()]).powi(2))
            .sum::<f64>()
            .sqrt()
    })
}
