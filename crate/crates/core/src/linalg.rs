//! Matrix aliases and the few dense helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

/// `[Re x; Im x]` stacking of a complex vector.
pub fn complex_to_real(x: &CVector) -> RVector {
    let n = x.len();
    RVector::from_fn(2 * n, |i, _| if i < n { x[i].re } else { x[i - n].im })
}

/// Inverse of [`complex_to_real`]: `x = first half + j * second half`.
pub fn real_to_complex(x_tilde: &RVector) -> crate::Result<CVector> {
    if !x_tilde.len().is_multiple_of(2) {
        return Err(crate::Error::invalid(format!(
            "real-stacked vector must have even length, got {}",
            x_tilde.len()
        )));
    }
    let n = x_tilde.len() / 2;
    Ok(CVector::from_fn(n, |i, _| Complex64::new(x_tilde[i], x_tilde[i + n])))
}

/// Largest eigenvalue of a real symmetric matrix.
pub fn max_symmetric_eigenvalue(m: &RMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue of a real symmetric PSD matrix by power iteration,
/// stopped once successive Rayleigh quotients agree to `rel_tol`.
pub fn power_iteration(m: &RMatrix, rel_tol: f64, max_iter: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic, non-degenerate start
    let mut v = RVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = m * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - lambda).abs() <= rel_tol * next.abs() {
            return next.max(lambda);
        }
        lambda = next;
    }
    lambda
}

/// Hermitian principal square root via unitary eigendecomposition, with
/// negative eigenvalues clamped at zero.
pub fn hermitian_sqrt(r: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(r.clone());
    let u = &eig.eigenvectors;
    let d = CMatrix::from_diagonal(&CVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&l| Complex64::new(l.max(0.0).sqrt(), 0.0)),
    ));
    u * d * u.adjoint()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(r: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(r.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Minimum-norm least-squares solution of `m z = b` through the SVD, with
/// singular values below `1e-12 σ_max` treated as zero.
pub fn pinv_solve(m: &RMatrix, b: &RVector) -> RVector {
    if m.nrows() == 0 || m.ncols() == 0 {
        return RVector::zeros(m.ncols());
    }
    let svd = m.clone().svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    svd.solve(b, cutoff).unwrap_or_else(|_| RVector::zeros(m.ncols()))
}

/// Maximum entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
