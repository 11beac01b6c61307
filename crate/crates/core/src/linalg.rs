//! Small dense complex matrix helpers used node by node.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::grid::C64;

/// Condition number above which a warning is attached to pointwise solves.
pub const CONDITION_WARNING: f64 = 1e8;

fn norm1(m: &DMatrix<C64>) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse by LU with partial pivoting, plus the 1-norm condition number.
pub fn inverse_with_condition(m: &DMatrix<C64>) -> Option<(DMatrix<C64>, f64)> {
    let inv = m.clone().lu().try_inverse()?;
    if inv.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return None;
    }
    let cond = norm1(m) * norm1(&inv);
    Some((inv, cond))
}

pub fn determinant(m: &DMatrix<C64>) -> C64 {
    m.clone().lu().determinant()
}

/// Ascending eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Ascending roots of `det(a - lambda b) = 0` for Hermitian `a` and
/// positive-definite Hermitian `b`, computed as the eigenvalues of
/// `L^-1 a L^-*` with `b = L L^*`. Returns `None` if `b` is not positive.
pub fn generalized_eigenvalues(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Option<Vec<f64>> {
    let chol = b.clone().cholesky()?;
    let l = chol.l();
    let linv = l.try_inverse()?;
    let c = &linv * a * linv.adjoint();
    Some(hermitian_eigenvalues(&c))
}

/// `exp(h)` for Hermitian `h` via its spectral decomposition.
pub fn hermitian_exp(h: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = SymmetricEigen::new((h + h.adjoint()) * C64::new(0.5, 0.0));
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l.exp(), 0.0)));
    v * d * v.adjoint()
}
