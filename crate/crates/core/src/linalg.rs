//! Small dense and banded linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Solve a tridiagonal system with the Thomas algorithm.
///
/// `sub[i]` couples row `i + 1` to column `i`, `sup[i]` couples row `i` to
/// column `i + 1`. Returns `None` on a zero pivot. No pivoting is done, so the
/// matrix should be diagonally dominant or symmetric positive definite.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if rhs.len() != n || (n > 0 && (sub.len() != n - 1 || sup.len() != n - 1)) {
        return None;
    }
    if n == 0 {
        return Some(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 {
        return None;
    }
    if n > 1 {
        c[0] = sup[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i - 1] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        if i < n - 1 {
            c[i] = sup[i] / pivot;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending and the
/// eigenvector columns permuted to match.
pub fn sorted_symmetric_eigen(mat: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(mat);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(mat: &DMatrix<f64>) -> DMatrix<f64> {
    (mat + mat.transpose()) * 0.5
}

/// Symmetric Toeplitz matrix from its first column.
pub fn toeplitz(first_col: &[f64]) -> DMatrix<f64> {
    let n = first_col.len();
    DMatrix::from_fn(n, n, |i, j| first_col[i.abs_diff(j)])
}

/// Inverse square root of a symmetric positive definite matrix, or `None`
/// when the smallest eigenvalue is not positive relative to the largest.
pub fn inv_sqrt_spd(mat: &DMatrix<f64>, rel_tol: f64) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let (vals, vecs) = sorted_symmetric_eigen(mat);
    let max = vals.iter().cloned().fold(0.0_f64, f64::max);
    if vals.is_empty() || max <= 0.0 || vals[0] <= rel_tol * max {
        return None;
    }
    let n = vals.len();
    let inv_root = DMatrix::from_diagonal(&DVector::from_iterator(n, vals.iter().map(|v| 1.0 / v.sqrt())));
    let root = DMatrix::from_diagonal(&DVector::from_iterator(n, vals.iter().map(|v| v.sqrt())));
    Some((&vecs * inv_root * vecs.transpose(), &vecs * root * vecs.transpose()))
}

/// Largest absolute entry of a matrix difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
