//! Small complex-matrix helpers shared across the crate.

use ndarray::{Array2, ArrayView2};
use ndarray_linalg::{c64, Inverse, Norm, SVD};

use crate::{Error, Result};

/// Conjugate transpose.
pub fn dagger(a: &ArrayView2<c64>) -> Array2<c64> {
    a.t().mapv(|x| x.conj())
}

/// Hermitian part `(a + a*)/2`.
pub fn hermitian_part(a: &ArrayView2<c64>) -> Array2<c64> {
    (&a.view() + &dagger(a)) * c64::new(0.5, 0.0)
}

/// Anti-Hermitian part `(a - a*)/(2i)`, returned as a Hermitian matrix.
pub fn imag_part(a: &ArrayView2<c64>) -> Array2<c64> {
    (&a.view() - &dagger(a)) * c64::new(0.0, -0.5)
}

/// `n x n` complex identity.
pub fn eye(n: usize) -> Array2<c64> {
    Array2::eye(n)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ArrayView2<c64>, b: &ArrayView2<c64>) -> Array2<c64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == c64::new(0.0, 0.0) {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.assign(&(b.mapv(|x| x * aij)));
        }
    }
    out
}

/// Frobenius norm.
pub fn fro_norm(a: &ArrayView2<c64>) -> f64 {
    a.to_owned().norm_l2()
}

/// Spectral (operator) norm via SVD; intended for small matrices.
pub fn spectral_norm(a: &ArrayView2<c64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let (_, s, _) = a.svd(false, false).expect("svd failed");
    s.iter().cloned().fold(0.0, f64::max)
}

/// Smallest singular value via SVD; intended for small matrices.
pub fn min_singular_value(a: &ArrayView2<c64>) -> f64 {
    let (_, s, _) = a.svd(false, false).expect("svd failed");
    s.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Matrix inverse with crate-level error reporting.
pub fn inv(a: &ArrayView2<c64>) -> Result<Array2<c64>> {
    a.to_owned()
        .inv()
        .map_err(|e| Error::Solver(format!("matrix inversion failed: {e}")))
}

/// Whether `a` is Hermitian to within `tol` in max-entry norm.
pub fn is_hermitian(a: &ArrayView2<c64>, tol: f64) -> bool {
    hermitian_deviation(a) <= tol
}

/// Max-entry deviation `max_ij |a_ij - conj(a_ji)|`.
pub fn hermitian_deviation(a: &ArrayView2<c64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let d = (a[[i, j]] - a[[j, i]].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Smallest eigenvalue of a Hermitian matrix (symmetrized before solving).
pub fn min_eig_hermitian(a: &ArrayView2<c64>) -> f64 {
    use ndarray_linalg::{EigValsh, UPLO};
    let h = hermitian_part(a);
    let vals = h
        .eigvalsh(UPLO::Lower)
        .expect("hermitian eigensolve failed");
    vals.iter().cloned().fold(f64::INFINITY, f64::min)
}
