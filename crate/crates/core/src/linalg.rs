//! Small dense helpers on top of nalgebra: kernel bases, smallest singular
//! values and subspace comparison.

use nalgebra::{DMatrix, SVD};

/// Singular values of `a`, sorted descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(|p, q| q.total_cmp(p));
    sv
}

/// Smallest singular value of a matrix with at most as many rows as
/// columns; `+∞` when there are no rows.
pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    singular_values(a).last().copied().unwrap_or(f64::INFINITY)
}

/// Spectral norm.
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis of `ker a` for an `n×m` matrix of full row rank `n`.
///
/// The matrix is padded to `m×m` so that the SVD yields a complete right
/// singular basis; the `m − n` right singular vectors with the smallest
/// singular values span the kernel. Each column is signed so that its
/// largest-magnitude entry is positive.
pub fn kernel_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = a.shape();
    assert!(n <= m, "kernel_basis expects a wide matrix");
    if n == 0 {
        return DMatrix::identity(m, m);
    }
    let mut padded = DMatrix::zeros(m, m);
    padded.rows_mut(0, n).copy_from(a);
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut basis = DMatrix::zeros(m, m - n);
    for (col, &idx) in order[n..].iter().enumerate() {
        let mut v = v_t.row(idx).transpose();
        let pivot = v.iter().copied().fold(0.0f64, |acc, c| if c.abs() > acc.abs() { c } else { acc });
        if pivot < 0.0 {
            v.neg_mut();
        }
        basis.set_column(col, &v);
    }
    basis
}

/// Sine of the largest principal angle between the column spaces of two
/// matrices with orthonormal columns.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.nrows(), b.nrows());
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    let residual = b - a * (a.transpose() * b);
    norm2(&residual)
}

/// Max absolute entry; zero for empty matrices.
pub(crate) fn amax(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |acc, c| acc.max(c.abs()))
}
