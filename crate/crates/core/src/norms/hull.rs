use nalgebra::{DMatrix, DVector};

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 10_000;

/// Dense two-phase simplex for `min cᵀx` subject to `Ax = b`, `x ≥ 0`.
///
/// Returns `None` when the problem is infeasible, unbounded, or the pivot
/// budget is exhausted. Uses Bland's rule, so it never cycles.
pub(crate) fn simplex_min(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Option<f64> {
    let (m, n) = a.shape();
    // Tableau columns: n structural, m artificial, then the right-hand side.
    let width = n + m + 1;
    let mut t = DMatrix::<f64>::zeros(m + 1, width);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = sign * a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        t[(i, width - 1)] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase 1 objective: minimize the artificial sum, expressed in non-basic terms.
    for j in 0..width {
        let s: f64 = (0..m).map(|i| t[(i, j)]).sum();
        t[(m, j)] = if (n..n + m).contains(&j) { 0.0 } else { -s };
    }
    run(&mut t, &mut basis, n + m)?;
    if -t[(m, width - 1)] > 1e-9 * (1.0 + b.amax()) {
        return None;
    }
    // Drive remaining artificials out of the basis where possible.
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[(i, j)].abs() > PIVOT_EPS) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }

    // Phase 2 objective row.
    for j in 0..width {
        t[(m, j)] = if j < n { c[j] } else { 0.0 };
    }
    for i in 0..m {
        let bj = basis[i];
        if bj < n {
            let f = t[(m, bj)];
            if f != 0.0 {
                for j in 0..width {
                    t[(m, j)] -= f * t[(i, j)];
                }
            }
        }
    }
    run(&mut t, &mut basis, n)?;
    Some(-t[(m, width - 1)])
}

fn run(t: &mut DMatrix<f64>, basis: &mut [usize], allowed: usize) -> Option<()> {
    let m = basis.len();
    let rhs = t.ncols() - 1;
    for _ in 0..MAX_PIVOTS {
        let Some(col) = (0..allowed).find(|&j| t[(m, j)] < -PIVOT_EPS) else {
            return Some(());
        };
        let mut row = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let a = t[(i, col)];
            if a > PIVOT_EPS {
                let ratio = t[(i, rhs)] / a;
                if ratio < best - 1e-15 || (ratio <= best + 1e-15 && row.map_or(true, |r: usize| basis[i] < basis[r])) {
                    best = ratio;
                    row = Some(i);
                }
            }
        }
        let row = row?;
        pivot(t, basis, row, col);
    }
    None
}

fn pivot(t: &mut DMatrix<f64>, basis: &mut [usize], row: usize, col: usize) {
    let p = t[(row, col)];
    let width = t.ncols();
    for j in 0..width {
        t[(row, j)] /= p;
    }
    for i in 0..t.nrows() {
        if i != row {
            let f = t[(i, col)];
            if f != 0.0 {
                for j in 0..width {
                    let v = t[(row, j)];
                    t[(i, j)] -= f * v;
                }
            }
        }
    }
    basis[row] = col;
}

/// Gauge of the symmetric hull `conv{±p_j}` restricted to the span of the
/// points, written in an orthonormal basis of that span.
#[derive(Clone, Debug)]
pub(crate) struct HullGauge {
    /// Orthonormal basis of the span (columns).
    pub span: DMatrix<f64>,
    /// Points in span coordinates (columns).
    pub points: DMatrix<f64>,
}

impl HullGauge {
    pub fn new(points: &[DVector<f64>]) -> Self {
        let d = points[0].len();
        let p = DMatrix::from_columns(points);
        let svd = p.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.amax();
        let mut cols: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > 1e-9 * smax.max(1e-300))
            .collect();
        cols.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let span = DMatrix::from_fn(d, cols.len(), |r, c| u[(r, cols[c])]);
        let points = span.transpose() * p;
        Self { span, points }
    }

    pub fn rank(&self) -> usize {
        self.span.ncols()
    }

    /// `min Σ|y_j|` subject to `Σ y_j p_j = Π v`, by the simplex method, with the
    /// polar support-function formula as fallback.
    pub fn eval(&self, v: &[f64]) -> f64 {
        let r = self.rank();
        if r == 0 {
            return 0.0;
        }
        let x = self.span.transpose() * DVector::from_column_slice(v);
        if x.amax() == 0.0 {
            return 0.0;
        }
        let k = self.points.ncols();
        let mut a = DMatrix::zeros(r, 2 * k);
        for j in 0..k {
            for i in 0..r {
                a[(i, j)] = self.points[(i, j)];
                a[(i, k + j)] = -self.points[(i, j)];
            }
        }
        let c = DVector::from_element(2 * k, 1.0);
        match simplex_min(&a, &x, &c) {
            Some(val) if val.is_finite() && val >= 0.0 => val,
            _ => self.polar_estimate(&x),
        }
    }

    /// `sup_u ⟨x, u⟩ / h(u)` over a sphere grid of the span.
    fn polar_estimate(&self, x: &DVector<f64>) -> f64 {
        let r = self.rank();
        let grid = super::grid::SphereGrid::new(r, 720);
        let mut best: f64 = 0.0;
        for u in grid.iter() {
            let u = DVector::from_column_slice(u);
            let h = (self.points.transpose() * &u).amax();
            if h > 0.0 {
                best = best.max(x.dot(&u) / h);
            }
        }
        best
    }
}
