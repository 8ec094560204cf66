//! Small dense helpers on top of `nalgebra`: rank-revealing range/kernel
//! extraction and extreme singular values of a map restricted to a subspace.

use nalgebra::{DMatrix, DVector};

/// Singular values at or below this are treated as zero when extracting
/// ranges and kernels of projections.
pub const RANK_TOL: f64 = 1e-10;

/// Thin singular value decomposition `m = u * diag(sigma) * v^T` with `v`
/// square and orthogonal, singular values in decreasing order.
///
/// Computed by one-sided Jacobi rotations, which stays accurate on the
/// rank-deficient projections handled here.
#[derive(Debug, Clone)]
pub(crate) struct Svd {
    /// `nrows x ncols`; columns for zero singular values are zero.
    pub u: DMatrix<f64>,
    /// One value per column of the input.
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 80;

pub(crate) fn sorted_svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    let eps = f64::EPSILON;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = DMatrix::zeros(rows, cols);
    let mut vs = DMatrix::zeros(cols, cols);
    let mut sigma = Vec::with_capacity(cols);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        if s > 0.0 {
            u.set_column(k, &(a.column(j) / s));
        }
        vs.set_column(k, &v.column(j));
        sigma.push(s);
    }
    Svd { u, sigma, v: vs }
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let x = m[(i, p)];
        let y = m[(i, q)];
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Moore-Penrose pseudo-inverse, dropping singular values at or below `tol`.
pub fn pseudo_inverse(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let svd = sorted_svd(m);
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.sigma.iter().enumerate() {
        if s > tol {
            out += svd.v.column(k) * svd.u.column(k).transpose() / s;
        }
    }
    out
}

/// Orthonormal basis (as columns) of the range of `m`.
pub fn range_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let d = m.nrows();
    if m.ncols() == 0 || d == 0 {
        return DMatrix::zeros(d, 0);
    }
    let svd = sorted_svd(m);
    let rank = svd.sigma.iter().filter(|&&s| s > tol).count();
    svd.u.columns(0, rank).into_owned()
}

/// Orthonormal basis (as columns) of the kernel of a square `m`.
pub fn kernel_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let svd = sorted_svd(m);
    let rank = svd.sigma.iter().filter(|&&s| s > tol).count();
    svd.v.columns(rank, n - rank).into_owned()
}

/// Extremes of `|M v| / |v|` over nonzero `v` in the span of `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedExtremes {
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// Unit vector in the subspace attaining `sigma_max`.
    pub max_direction: Option<DVector<f64>>,
    /// Unit vector in the subspace attaining `sigma_min`.
    pub min_direction: Option<DVector<f64>>,
    /// The subspace was trivial; both bounds are vacuous.
    pub vacuous: bool,
}

/// Largest and smallest singular values of `m` restricted to the subspace
/// spanned by the orthonormal columns of `basis`.
///
/// An empty basis yields `(0, +inf)` with `vacuous` set.
pub fn restricted_extremes(m: &DMatrix<f64>, basis: &DMatrix<f64>) -> RestrictedExtremes {
    let r = basis.ncols();
    if r == 0 {
        return RestrictedExtremes {
            sigma_max: 0.0,
            sigma_min: f64::INFINITY,
            max_direction: None,
            min_direction: None,
            vacuous: true,
        };
    }
    let restricted = m * basis;
    let svd = sorted_svd(&restricted);
    let sv = &svd.sigma;
    let max_dir = basis * svd.v.column(0);
    let min_dir = basis * svd.v.column(r - 1);
    let sigma_min = if restricted.nrows() < r { 0.0 } else { sv[r - 1] };
    RestrictedExtremes {
        sigma_max: sv[0],
        sigma_min,
        max_direction: Some(max_dir),
        min_direction: Some(min_dir),
        vacuous: false,
    }
}

/// Smallest singular value of a square matrix.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    sorted_svd(m).sigma.last().copied().unwrap_or(f64::INFINITY)
}

/// Largest singular value (spectral norm).
pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    sorted_svd(m).sigma.first().copied().unwrap_or(0.0)
}

/// `|a - b|_F / max(|b|_F, floor)`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}

/// Row-major nested rows to a matrix; `None` if ragged.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Matrix to row-major nested rows.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
