//! Dense complex eigenvalues through nalgebra's Schur decomposition.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("Schur iteration did not converge for a {0}x{0} matrix")]
    NotConverged(usize),
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 100_000;

/// All eigenvalues of a square complex matrix, in no particular order.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>, LinalgError> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or(LinalgError::NotConverged(rows))?;
    let ev = schur.eigenvalues().ok_or(LinalgError::NotConverged(rows))?;
    Ok(ev.iter().copied().collect())
}

/// `det(lambda I - m)` through LU factorization.
pub fn characteristic_value(m: &CMatrix, lambda: Complex64) -> Complex64 {
    let n = m.nrows();
    let shifted = CMatrix::from_diagonal_element(n, n, lambda) - m;
    shifted.determinant()
}

/// Largest absolute entry; used as the frequency scale of a dynamical matrix.
pub fn max_abs_entry(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
