use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::HolonomySample;
use crate::error::{Error, Result};
use crate::linalg::{columns, random_unit, sym_eigen};

const DIRECTION_SEED: u64 = 0x5eed_d1e5;
const COMMUTANT_SEED: u64 = 0xc0_33_07;
const COMMUTANT_DRAWS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Transitive,
    NonTransitive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitivityReport {
    pub verdict: Verdict,
    pub coverage_score: f64,
    pub n_dirs: usize,
    pub orbit_size: usize,
}

/// Orbit coverage of the unit sphere by `{A·e₁}`.
///
/// Distances are measured between lines (`arccos |⟨u, A e₁⟩|`), so a lone
/// vector leaves a gap of π/2 rather than π. The score is the worst gap over
/// `n_dirs` seeded random probes.
pub fn transitivity_test(s: &HolonomySample, n_dirs: usize, eps: f64) -> Result<TransitivityReport> {
    if s.is_empty() {
        return Err(Error::arg("holonomy sample has no elements"));
    }
    let d = s.dim();
    if d < 2 {
        return Err(Error::arg("transitivity needs dimension at least 2"));
    }
    if n_dirs == 0 {
        return Err(Error::arg("n_dirs must be at least 1"));
    }
    let orbit: Vec<DVector<f64>> = s
        .elements
        .iter()
        .map(|a| {
            let v = a.column(0).into_owned();
            let n = v.norm();
            v / n
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED);
    let mut score: f64 = 0.0;
    for _ in 0..n_dirs {
        let u = random_unit(&mut rng, d);
        let gap = orbit
            .iter()
            .map(|w| u.dot(w).abs().min(1.0).acos())
            .fold(f64::INFINITY, f64::min);
        score = score.max(gap);
    }
    Ok(TransitivityReport {
        verdict: if score <= eps {
            Verdict::Transitive
        } else {
            Verdict::NonTransitive
        },
        coverage_score: score,
        n_dirs,
        orbit_size: orbit.len(),
    })
}

/// Orthogonal decomposition of the frame space into sample-invariant blocks.
#[derive(Clone, Debug)]
pub struct SplittingReport {
    /// Orthonormal column bases in frame coordinates, one per block.
    pub subspace_bases: Vec<DMatrix<f64>>,
    pub fixed_dim: usize,
    pub block_dims: Vec<usize>,
    /// Index of the block on which every element acts trivially, if any.
    pub fixed_block: Option<usize>,
    /// `max ‖(I − BBᵀ) A B‖_F` over blocks and elements.
    pub invariance_residual: f64,
    /// Some commutant eigenvalue fell close to the null threshold.
    pub warning: bool,
}

impl SplittingReport {
    pub fn dim(&self) -> usize {
        self.block_dims.iter().sum()
    }

    /// Orthogonal projector onto block `i`.
    pub fn projector(&self, i: usize) -> DMatrix<f64> {
        let b = &self.subspace_bases[i];
        b * b.transpose()
    }

    /// The trivial splitting of `R^dim` into one block.
    pub fn single_block(dim: usize) -> Self {
        Self {
            subspace_bases: vec![DMatrix::identity(dim, dim)],
            fixed_dim: 0,
            block_dims: vec![dim],
            fixed_block: None,
            invariance_residual: 0.0,
            warning: false,
        }
    }

    /// Splitting into the given coordinate blocks, in order.
    pub fn coordinate_blocks(dims: &[usize]) -> Self {
        let n: usize = dims.iter().sum();
        let mut bases = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for &k in dims {
            let mut b = DMatrix::zeros(n, k);
            for j in 0..k {
                b[(offset + j, j)] = 1.0;
            }
            bases.push(b);
            offset += k;
        }
        Self {
            subspace_bases: bases,
            fixed_dim: 0,
            block_dims: dims.to_vec(),
            fixed_block: None,
            invariance_residual: 0.0,
            warning: false,
        }
    }
}

/// Splits sorted `values` into eigen-clusters separated by gaps larger than `tol`.
fn cluster(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if v - values[*g.last().unwrap()] <= tol => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Invariant-subspace splitting of the sample.
///
/// The fixed space is the near-kernel of `Σ (A − I)ᵀ(A − I)`. Its complement is
/// split by the eigenspaces of a random symmetric element of the commutant;
/// eigenvalues closer than `tol` are merged.
pub fn invariant_subspaces(s: &HolonomySample, tol: f64) -> Result<SplittingReport> {
    if s.is_empty() {
        return Err(Error::arg("holonomy sample has no elements"));
    }
    if !(tol > 0.0) {
        return Err(Error::arg("splitting tolerance must be positive"));
    }
    let d = s.dim();
    let k = s.len() as f64;
    let id = DMatrix::<f64>::identity(d, d);
    let threshold = (0.1 * tol).powi(2);
    let mut warning = false;

    let mut gram = DMatrix::<f64>::zeros(d, d);
    for a in &s.elements {
        let e = a - &id;
        gram += e.transpose() * e;
    }
    gram /= k;
    let (values, vectors) = sym_eigen(&gram);
    let fixed_cols: Vec<usize> = (0..d).filter(|&i| values[i] <= threshold).collect();
    let moving_cols: Vec<usize> = (0..d).filter(|&i| values[i] > threshold).collect();
    warning |= values
        .iter()
        .any(|&v| v > threshold && v <= 100.0 * threshold);

    let mut blocks: Vec<(DMatrix<f64>, bool)> = Vec::new();
    if !fixed_cols.is_empty() {
        blocks.push((columns(&vectors, &fixed_cols), true));
    }
    if !moving_cols.is_empty() {
        let q = columns(&vectors, &moving_cols);
        let (sub, warn) = commutant_blocks(s, &q, threshold, tol);
        warning |= warn;
        for b in sub {
            blocks.push((&q * b, false));
        }
    }

    // Order blocks by the coordinate where each projector is heaviest.
    blocks.sort_by_key(|(b, _)| {
        let p = b * b.transpose();
        let mut best = 0;
        for i in 0..d {
            if p[(i, i)] > p[(best, best)] + 1e-9 {
                best = i;
            }
        }
        best
    });

    let mut residual: f64 = 0.0;
    for (b, _) in &blocks {
        let comp = &id - b * b.transpose();
        for a in &s.elements {
            residual = residual.max((&comp * a * b).norm());
        }
    }
    let fixed_block = blocks.iter().position(|(_, fixed)| *fixed);
    Ok(SplittingReport {
        fixed_dim: fixed_cols.len(),
        block_dims: blocks.iter().map(|(b, _)| b.ncols()).collect(),
        subspace_bases: blocks.into_iter().map(|(b, _)| b).collect(),
        fixed_block,
        invariance_residual: residual,
        warning,
    })
}

/// Blocks of the restricted action `B = QᵀAQ`, as bases in `Q` coordinates.
fn commutant_blocks(
    s: &HolonomySample,
    q: &DMatrix<f64>,
    threshold: f64,
    tol: f64,
) -> (Vec<DMatrix<f64>>, bool) {
    let m = q.ncols();
    let n2 = m * m;
    let id = DMatrix::<f64>::identity(m, m);
    let mut normal = DMatrix::<f64>::zeros(n2, n2);
    for a in &s.elements {
        let b = q.transpose() * a * q;
        // vec(XB − BX) = (Bᵀ ⊗ I − I ⊗ B) vec(X), column-major vec.
        let op = b.transpose().kronecker(&id) - id.kronecker(&b);
        normal += op.transpose() * op;
    }
    normal /= s.len() as f64;
    let (values, vectors) = sym_eigen(&normal);
    let null: Vec<usize> = (0..n2).filter(|&i| values[i] <= threshold).collect();
    let warning = values
        .iter()
        .any(|&v| v > threshold && v <= 100.0 * threshold);
    if null.len() <= 1 {
        return (vec![id], warning);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(COMMUTANT_SEED);
    let mut best: Option<Vec<DMatrix<f64>>> = None;
    for _ in 0..COMMUTANT_DRAWS {
        let mut x = DMatrix::<f64>::zeros(m, m);
        for &c in &null {
            let w: f64 = StandardNormal.sample(&mut rng);
            let col = vectors.column(c);
            for j in 0..m {
                for i in 0..m {
                    x[(i, j)] += w * col[j * m + i];
                }
            }
        }
        let sym = (&x + x.transpose()) * 0.5;
        let (ev, evec) = sym_eigen(&sym);
        let scale = ev.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if scale == 0.0 {
            continue;
        }
        let ev: Vec<f64> = ev.iter().map(|v| v / scale).collect();
        let groups = cluster(&ev, tol);
        if best.as_ref().map_or(true, |b| groups.len() > b.len()) {
            best = Some(groups.iter().map(|g| columns(&evec, g)).collect());
        }
    }
    (best.unwrap_or_else(|| vec![id]), warning)
}
