//! Small dense helpers shared by the holonomy, norms and affine modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const JACOBI_SWEEPS: usize = 64;

/// Uniformly distributed unit vector.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::<f64>::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues are returned in ascending order with matching orthonormal
/// eigenvector columns. Only the upper triangle's symmetric part is used.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "sym_eigen needs a square matrix");
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = idx.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, idx[c])]);
    (values, vectors)
}

/// The listed columns of `m`.
pub fn columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

/// Principal angles (ascending) between the column spans of two orthonormal bases.
///
/// Angles come from `atan2(sin, cos)` so that small angles keep full precision.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    if a.ncols() == 0 || b.ncols() == 0 {
        return Vec::new();
    }
    let (a, b) = if a.ncols() >= b.ncols() { (a, b) } else { (b, a) };
    let mut cos: Vec<f64> = (a.transpose() * b).singular_values().iter().copied().collect();
    cos.sort_by(|x, y| y.total_cmp(x));
    let rest = b - a * (a.transpose() * b);
    let mut sin: Vec<f64> = rest.singular_values().iter().copied().collect();
    sin.sort_by(|x, y| x.total_cmp(y));
    cos.iter()
        .zip(&sin)
        .map(|(c, s)| s.atan2(*c))
        .collect()
}

/// Largest principal angle between two subspaces, π/2 when dimensions differ.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    principal_angles(a, b).into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(m: &DMatrix<f64>) -> f64 {
        let (vals, vecs) = sym_eigen(m);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals));
        let n = m.nrows();
        (m - &vecs * d * vecs.transpose()).norm()
            + (vecs.transpose() * &vecs - DMatrix::<f64>::identity(n, n)).norm()
    }

    #[test]
    fn degenerate_diagonal_blocks() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.27, -1.27, -0.5, -0.5]));
        let (vals, vecs) = sym_eigen(&m);
        assert_eq!(vals, vec![-1.27, -1.27, -0.5, -0.5]);
        assert_eq!(vecs, DMatrix::identity(4, 4));
    }

    #[test]
    fn random_symmetric() {
        for n in 1..7 {
            let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) as f64).sin());
            let m = &a + a.transpose();
            assert!(residual(&m) < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn repeated_eigenvalue_after_rotation() {
        let q = DMatrix::from_row_slice(3, 3, &[0.6, 0.8, 0.0, -0.8, 0.6, 0.0, 0.0, 0.0, 1.0]);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 2.0, 5.0]));
        let m = &q * d * q.transpose();
        let (vals, _) = sym_eigen(&m);
        assert!((vals[0] - 2.0).abs() < 1e-13 && (vals[2] - 5.0).abs() < 1e-13);
        assert!(residual(&m) < 1e-12);
    }

    #[test]
    fn principal_angles_of_axes() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let e2 = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        assert!((subspace_distance(&e1, &e2) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(subspace_distance(&e1, &e1) < 1e-15);
        let tilt = DMatrix::from_column_slice(3, 1, &[1.0, 1e-10, 0.0]).normalize();
        assert!((subspace_distance(&e1, &tilt) - 1e-10).abs() < 1e-20);
    }
}
