//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Default largest admissible condition number of HH† (equivalently (σ_max/σ_min)²
/// of H).
pub const CONDITION_LIMIT: f64 = 1e12;

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Hermitian positive-semidefinite square root, computed from the eigendecomposition
/// with negative eigenvalues clamped to zero.
pub fn hermitian_sqrt(a: &CMatrix) -> CMatrix {
    let eig = a.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| c(l.max(0.0).sqrt()));
    let v = &eig.eigenvectors;
    let mut root = v * CMatrix::from_diagonal(&roots) * v.adjoint();
    // The product is Hermitian up to rounding; make it exact.
    let adj = root.adjoint();
    root = (root + adj).map(|z| z * 0.5);
    root
}

/// Singular values of `a`, in no particular order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Rejects matrices whose Gram HH† has a condition number above `limit`.
pub fn check_full_row_rank(h: &CMatrix, limit: f64) -> Result<()> {
    let sv = singular_values(h);
    let max = sv.iter().copied().fold(0.0_f64, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 {
        (max / min).powi(2)
    } else {
        f64::INFINITY
    };
    if !(condition <= limit) {
        return Err(Error::RankDeficient {
            smallest_singular_value: min,
            condition,
        });
    }
    Ok(())
}

/// Numerical rank with tolerance `rel_tol * σ_max`.
pub fn numerical_rank(a: &CMatrix, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    let max = sv.iter().copied().fold(0.0_f64, f64::max);
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// `A = L Q` with `L` lower-triangular carrying a nonnegative real diagonal and `Q`
/// having orthonormal rows.
#[derive(Debug, Clone)]
pub struct LqFactors {
    pub lower: CMatrix,
    pub rows: CMatrix,
}

/// LQ factorization of a wide (or square) matrix through the QR factorization of its
/// adjoint.
pub fn lq(a: &CMatrix) -> LqFactors {
    let n = a.nrows();
    let qr = a.adjoint().qr();
    let mut lower = qr.r().adjoint();
    let mut rows = qr.q().adjoint();
    for k in 0..n {
        let d = lower[(k, k)];
        let mag = d.norm();
        if mag > 0.0 {
            let phase = d / mag;
            // A = (L D⁻¹)(D Q) with D = diag(phase)
            lower.column_mut(k).apply(|z| *z *= phase.conj());
            rows.row_mut(k).apply(|z| *z *= phase);
        }
        lower[(k, k)] = c(mag);
    }
    LqFactors { lower, rows }
}

/// Submatrix on the given row and column index lists.
pub fn select(a: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Log-determinant of a Hermitian positive-definite matrix; `None` if the Cholesky
/// factorization fails. The empty matrix has log-determinant zero.
pub fn hpd_log_det(a: &CMatrix) -> Option<f64> {
    if a.nrows() == 0 {
        return Some(0.0);
    }
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    Some((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// `‖A‖_F`.
pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Re Tr(A† B A)`.
pub fn trace_quadratic(a: &CMatrix, b: &CMatrix) -> f64 {
    (a.adjoint() * b * a).trace().re
}
