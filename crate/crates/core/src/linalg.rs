//! Small dense-matrix helpers on top of `nalgebra`.

use nalgebra::DMatrix;

pub type Matrix = DMatrix<f64>;

/// Largest absolute entry, `‖A‖_max`.
pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

pub fn is_diagonal(a: &Matrix) -> bool {
    a.is_square()
        && a.iter()
            .enumerate()
            .all(|(n, &x)| x == 0.0 || n % a.nrows() == n / a.nrows())
}

/// Spectral norm (largest singular value).
///
/// Diagonal inputs return the largest absolute diagonal entry exactly; all
/// others go through a full SVD.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if is_diagonal(a) {
        return a.diagonal().iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |m: f64, &s| m.max(s))
}

/// Symmetric within `tol` relative to the largest entry.
pub fn is_symmetric(a: &Matrix, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a).max(1.0);
    let n = a.nrows();
    (0..n).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol * scale))
}

/// Operator or entrywise-max norm of a matrix.
pub fn matrix_norm(a: &Matrix, kind: crate::NormKind) -> f64 {
    match kind {
        crate::NormKind::Operator => spectral_norm(a),
        crate::NormKind::Max => max_abs(a),
    }
}
