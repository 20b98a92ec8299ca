use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

/// Deterministic sample of the unit sphere `S^{dim−1}`.
///
/// The resolution parameter `n` means: `n` equally spaced angles in dimension 2;
/// the icosphere with about `n` vertices in dimension 3 (2562 for `n = 2562`);
/// in higher dimensions, points `(cos α·a, sin α·b)` with `a` on a circle of
/// `n / 24` points and `b` on a coarser grid of the remaining sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereGrid {
    dim: usize,
    resolution: usize,
    points: Vec<f64>,
}

impl SphereGrid {
    pub fn new(dim: usize, n: usize) -> Self {
        assert!(dim >= 1, "sphere grid needs dimension at least 1");
        let n = n.max(4);
        let points = match dim {
            1 => vec![1.0, -1.0],
            2 => circle(n),
            3 => icosphere(icosphere_level(n)),
            _ => product_grid(dim, n),
        };
        Self {
            dim,
            resolution: n,
            points,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub(crate) fn flat(&self) -> &[f64] {
        &self.points
    }

    /// Largest angle from any point of the sphere to the grid, estimated from
    /// nearest-neighbour spacing.
    pub fn spacing(&self) -> f64 {
        match self.dim {
            1 => 0.0,
            2 => PI / self.len() as f64,
            _ => {
                // Half the worst nearest-neighbour angle over a subsample.
                let step = (self.len() / 64).max(1);
                let mut worst: f64 = 0.0;
                for i in (0..self.len()).step_by(step) {
                    let p = self.point(i);
                    let mut best = f64::INFINITY;
                    for (j, q) in self.iter().enumerate() {
                        if i != j {
                            let c: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
                            best = best.min(c.clamp(-1.0, 1.0).acos());
                        }
                    }
                    worst = worst.max(best);
                }
                worst
            }
        }
    }
}

fn circle(n: usize) -> Vec<f64> {
    (0..n)
        .flat_map(|k| {
            let (s, c) = (2.0 * PI * k as f64 / n as f64).sin_cos();
            [c, s]
        })
        .collect()
}

fn icosphere_level(n: usize) -> usize {
    // Level ℓ has 10·4^ℓ + 2 vertices.
    let ratio = (n.saturating_sub(2) as f64 / 10.0).max(1.0);
    (ratio.log(4.0).round() as usize).min(6)
}

fn icosphere(level: usize) -> Vec<f64> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| normalize3(*v))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(normalize3([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    verts.into_iter().flatten().collect()
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn product_grid(dim: usize, n: usize) -> Vec<f64> {
    let m = (n / 24).clamp(8, 64);
    let head = circle(m);
    let tail = SphereGrid::new(dim - 2, if dim - 2 == 2 { m } else { n / 4 });
    let n_alpha = (m / 4).max(3) + 1;
    let mut out = Vec::new();
    for k in 0..n_alpha {
        let alpha = FRAC_PI_2 * k as f64 / (n_alpha - 1) as f64;
        let (sa, ca) = alpha.sin_cos();
        let heads: Vec<&[f64]> = if k == n_alpha - 1 {
            vec![&[0.0, 0.0]]
        } else {
            head.chunks_exact(2).collect()
        };
        let tails: Vec<&[f64]> = if k == 0 {
            vec![&[][..]]
        } else {
            tail.iter().collect()
        };
        for h in &heads {
            for t in &tails {
                out.push(ca * h[0]);
                out.push(ca * h[1]);
                if t.is_empty() {
                    out.extend(std::iter::repeat(0.0).take(dim - 2));
                } else {
                    out.extend(t.iter().map(|x| sa * x));
                }
            }
        }
    }
    out
}
