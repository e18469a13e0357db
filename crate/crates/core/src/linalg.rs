//! Small dense-matrix helpers shared by the bound and estimation modules.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Numeric inverse via LU. Used as the independent route against the
/// closed-form inverses.
pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    m.clone().try_inverse().ok_or(Error::Singular)
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::Singular)?;
    Ok(chol.inverse())
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.ncols() != b.nrows() || a.nrows() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            found: b.nrows(),
        });
    }
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    Ok(acc)
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// PSD test with a tolerance relative to the largest eigenvalue magnitude.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let ev = sym_eigenvalues(m);
    let scale = ev.iter().fold(0.0_f64, |s, e| s.max(e.abs()));
    ev.first().is_none_or(|&min| min >= -rel_tol * scale.max(f64::MIN_POSITIVE))
}

/// Sum of singular values.
pub fn trace_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().sum()
}

/// `‖a − b‖_tr / ‖b‖_tr`.
pub fn relative_trace_norm_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    trace_norm(&(a - b)) / trace_norm(b)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |s, x| s.max(x.abs()))
}
