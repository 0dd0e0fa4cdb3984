//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative PSD tolerance: minimum eigenvalue may not drop below
/// `-PSD_TOL * max(diag)`.
pub const PSD_TOL: f64 = 1e-10;

pub fn max_diagonal(m: &DMatrix<f64>) -> f64 {
    m.diagonal().iter().fold(0.0f64, |acc, v| acc.max(*v))
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    let scale = max_diagonal(m).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > 1e-12 * scale {
        Err(Error::NotSymmetric(worst))
    } else {
        Ok(())
    }
}

/// PSD test: `m + tau I` must admit a Cholesky factor with
/// `tau = PSD_TOL * max(diag)`, which holds iff the minimum eigenvalue
/// exceeds `-tau`.
pub fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    let maxd = max_diagonal(m);
    let tol = PSD_TOL * maxd;
    if m.iter().any(|v| !v.is_finite()) || maxd <= 0.0 {
        return Err(Error::NotPsd {
            min_eig: min_eigenvalue(m),
            tol,
        });
    }
    let shifted = m + DMatrix::identity(m.nrows(), m.nrows()) * tol;
    if shifted.cholesky().is_some() {
        Ok(())
    } else {
        Err(Error::NotPsd {
            min_eig: min_eigenvalue(m),
            tol,
        })
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, v| acc.min(*v))
}

pub fn quad_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = DVector::from_column_slice(x);
    (v.transpose() * m * &v)[(0, 0)]
}

pub fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let v = DVector::from_column_slice(x);
    (m * v).iter().copied().collect()
}
