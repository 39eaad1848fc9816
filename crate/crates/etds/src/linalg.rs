//! Small dense linear-algebra helpers shared by the design and certification code.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Frobenius norm of a matrix.
pub fn frob_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Spectral norm, computed as the square root of the largest eigenvalue of MᵀM.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let eigs = gram.symmetric_eigenvalues();
    eigs.iter().cloned().fold(0.0f64, f64::max).max(0.0).sqrt()
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn symmetric_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eigs = m.symmetric_eigenvalues();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &e in eigs.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    (lo, hi)
}

/// True when every eigenvalue of `m` has real part strictly below `-margin`.
pub fn is_hurwitz(m: &DMatrix<f64>, margin: f64) -> bool {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .all(|l| l.re < -margin)
}

/// Largest real part over the spectrum of `m`.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Symmetric part (M + Mᵀ)/2; removes drift introduced by repeated solves.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Block-diagonal stack of square or rectangular blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Kronecker product A ⊗ B.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Solve the dense linear system M y = rhs by LU with partial pivoting.
pub fn solve_linear(m: DMatrix<f64>, rhs: nalgebra::DVector<f64>) -> Result<nalgebra::DVector<f64>> {
    m.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFault("singular linear system".into()))
}

/// Inverse through LU; errors on singular input.
pub fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidWeights(format!("{what} is singular")))
}

/// Require a symmetric matrix to be positive definite: λ_min > tol.
pub fn require_positive_definite(m: &DMatrix<f64>, tol: f64, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("{what} must be square")));
    }
    let asym = frob_norm(&(m - m.transpose()));
    if asym > 1e-10 * (1.0 + frob_norm(m)) {
        return Err(Error::InvalidWeights(format!("{what} is not symmetric")));
    }
    let (lo, _) = symmetric_eig_range(m);
    if lo <= tol {
        return Err(Error::InvalidWeights(format!(
            "{what} is not positive definite (lambda_min = {lo:.3e})"
        )));
    }
    Ok(())
}
