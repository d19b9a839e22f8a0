//! Self-adjoint linear matrix pencils for noncommutative polynomials.
//!
//! A polynomial `p(X1, X2)` of degree two or more cannot be inverted
//! entry-wise, but it embeds into a larger linear pencil
//! `L = gamma0 ⊗ 1 + gamma1 ⊗ X1 + gamma2 ⊗ X2` whose resolvent contains the
//! resolvent of `p`: the upper-left block of `(z·e11 ⊗ I − L(S1, S2))^{-1}`
//! equals `(z − p(S1, S2))^{-1}`. Pencils here use a *corner convention*: the
//! degree ≤ 1 part of the polynomial sits in the scalar (0,0) entry, and the
//! remaining blocks `u, v, Q` (row 0, column 0, trailing principal block)
//! satisfy `u Q^{-1} v = −(p − corner)`, which is exactly what the Schur
//! complement needs. Sums concatenate blocks; self-adjoint polynomials get a
//! doubled Hermitian pencil built from a split `p = p0 + p0*`.

use crate::linalg;
use crate::ncpoly::{NCPolynomial, Word, LETTER_X};
use crate::{Error, Result};
use ndarray::prelude::*;
use ndarray_linalg::types::c64;

/// Linear pencil `gamma0 ⊗ 1 + gamma1 ⊗ X1 + gamma2 ⊗ X2` of dimension `n`.
#[derive(Debug, Clone)]
pub struct LinearPencil {
    pub n: usize,
    pub gamma0: Array2<c64>,
    pub gamma1: Array2<c64>,
    pub gamma2: Array2<c64>,
}

impl LinearPencil {
    fn zeros(n: usize) -> Self {
        LinearPencil {
            n,
            gamma0: Array2::zeros((n, n)),
            gamma1: Array2::zeros((n, n)),
            gamma2: Array2::zeros((n, n)),
        }
    }

    /// The three coefficient matrices, indexed 0 (constant), 1 (X1), 2 (X2).
    pub fn gammas(&self) -> [&Array2<c64>; 3] {
        [&self.gamma0, &self.gamma1, &self.gamma2]
    }

    fn gammas_mut(&mut self) -> [&mut Array2<c64>; 3] {
        [&mut self.gamma0, &mut self.gamma1, &mut self.gamma2]
    }

    /// Evaluates `gamma0 ⊗ I + gamma1 ⊗ S1 + gamma2 ⊗ S2` on square matrices.
    pub fn evaluate(&self, s1: &ArrayView2<c64>, s2: &ArrayView2<c64>) -> Result<Array2<c64>> {
        let n = s1.nrows();
        if s1.dim() != (n, n) || s2.dim() != (n, n) {
            return Err(Error::Dim(format!(
                "pencil evaluation needs square matrices of equal size, got {:?} and {:?}",
                s1.dim(),
                s2.dim()
            )));
        }
        let id = linalg::eye(n);
        let mut out = linalg::kron(&self.gamma0.view(), &id.view());
        out += &linalg::kron(&self.gamma1.view(), s1);
        out += &linalg::kron(&self.gamma2.view(), s2);
        Ok(out)
    }

    /// Max entry-wise deviation of the coefficient matrices from Hermitian.
    pub fn hermiticity_deviation(&self) -> f64 {
        self.gammas()
            .iter()
            .map(|g| linalg::hermitian_deviation(&g.view()))
            .fold(0.0, f64::max)
    }
}

/// Pencil of a single monomial `coeff · X_{i1} ⋯ X_{il}` in corner convention.
///
/// Degree 0 or 1 gives the 1×1 pencil equal to the monomial itself. Degree
/// `l ≥ 2` gives the `(l+1)×(l+1)` pencil whose first row ends in `coeff`,
/// with the letters on the next lower anti-diagonal and −1 beside them.
pub fn linearize_monomial(coeff: c64, word: &Word) -> LinearPencil {
    let l = word.len();
    if l <= 1 {
        let mut p = LinearPencil::zeros(1);
        if l == 0 {
            p.gamma0[[0, 0]] = coeff;
        } else if word.letters()[0] == LETTER_X {
            p.gamma1[[0, 0]] = coeff;
        } else {
            p.gamma2[[0, 0]] = coeff;
        }
        return p;
    }
    let mut p = LinearPencil::zeros(l + 1);
    p.gamma0[[0, l]] = coeff;
    for (j, &letter) in word.letters().iter().enumerate() {
        let row = j + 1;
        if letter == LETTER_X {
            p.gamma1[[row, l - row]] = c64::new(1.0, 0.0);
        } else {
            p.gamma2[[row, l - row]] = c64::new(1.0, 0.0);
        }
        p.gamma0[[row, l - row + 1]] = c64::new(-1.0, 0.0);
    }
    p
}

/// Sum of two corner-convention pencils: corners add, `u`, `v` concatenate,
/// `Q` blocks go on the diagonal. Output dimension is `n1 + n2 − 1`.
pub fn linearize_sum(l1: &LinearPencil, l2: &LinearPencil) -> LinearPencil {
    let (n1, n2) = (l1.n, l2.n);
    let n = n1 + n2 - 1;
    let mut out = LinearPencil::zeros(n);
    let parts = [l1.gammas(), l2.gammas()];
    for (i, g) in out.gammas_mut().into_iter().enumerate() {
        let (a, b) = (parts[0][i], parts[1][i]);
        g[[0, 0]] = a[[0, 0]] + b[[0, 0]];
        if n1 > 1 {
            g.slice_mut(s![0, 1..n1]).assign(&a.slice(s![0, 1..]));
            g.slice_mut(s![1..n1, 0]).assign(&a.slice(s![1.., 0]));
            g.slice_mut(s![1..n1, 1..n1]).assign(&a.slice(s![1.., 1..]));
        }
        if n2 > 1 {
            g.slice_mut(s![0, n1..]).assign(&b.slice(s![0, 1..]));
            g.slice_mut(s![n1.., 0]).assign(&b.slice(s![1.., 0]));
            g.slice_mut(s![n1.., n1..]).assign(&b.slice(s![1.., 1..]));
        }
    }
    out
}

/// Corner-convention pencil of an arbitrary polynomial (not self-adjoint).
fn linearize_poly(p: &NCPolynomial) -> LinearPencil {
    let mut acc = LinearPencil::zeros(1);
    for (word, &coeff) in p.terms() {
        acc = linearize_sum(&acc, &linearize_monomial(coeff, word));
    }
    acc
}

/// Hermitian pencil of a self-adjoint polynomial.
///
/// Splits `p = p0 + p0*` (words lexicographically below their reversal go to
/// `p0` whole; palindromic words, whose coefficients self-adjointness forces
/// real, contribute half) and assembles the doubled pencil
/// `[[s0+s0*, u0, v0*], [u0*, 0, Q0*], [v0, Q0, 0]]` of dimension `2·n0 − 1`.
pub fn linearize_selfadjoint(p: &NCPolynomial) -> Result<LinearPencil> {
    if !p.is_selfadjoint() {
        return Err(Error::NotSelfAdjoint(format!(
            "cannot build a Hermitian pencil for {p}"
        )));
    }
    let mut p0 = NCPolynomial::zero();
    for (word, &coeff) in p.terms() {
        let rev = word.reversed();
        if *word < rev {
            p0.add_term(word.clone(), coeff);
        } else if *word == rev {
            p0.add_term(word.clone(), coeff * 0.5);
        }
    }
    let half = linearize_poly(&p0);
    let n0 = half.n;
    let n = 2 * n0 - 1;
    let mut out = LinearPencil::zeros(n);
    for (i, g) in out.gammas_mut().into_iter().enumerate() {
        let h = half.gammas()[i];
        let corner = h[[0, 0]];
        g[[0, 0]] = corner + corner.conj();
        if n0 > 1 {
            let u0 = h.slice(s![0, 1..]);
            let v0 = h.slice(s![1.., 0]);
            let q0 = h.slice(s![1.., 1..]);
            g.slice_mut(s![0, 1..n0]).assign(&u0);
            g.slice_mut(s![0, n0..]).assign(&v0.mapv(|z| z.conj()));
            g.slice_mut(s![1..n0, 0]).assign(&u0.mapv(|z| z.conj()));
            g.slice_mut(s![n0.., 0]).assign(&v0);
            g.slice_mut(s![1..n0, n0..])
                .assign(&q0.t().mapv(|z| z.conj()));
            g.slice_mut(s![n0.., 1..n0]).assign(&q0);
        }
    }
    debug_assert!(out.hermiticity_deviation() < 1e-14);
    Ok(out)
}

/// Residual of the resolvent identity the pencil must satisfy: the spectral
/// norm of the difference between the upper-left `N×N` block of
/// `(z·e11 ⊗ I − L(S1,S2))^{-1}` and `(z − p(S1,S2))^{-1}`.
pub fn schur_check(
    p: &NCPolynomial,
    pencil: &LinearPencil,
    s1: &ArrayView2<c64>,
    s2: &ArrayView2<c64>,
    z: c64,
) -> Result<f64> {
    let big_n = s1.nrows();
    let evaluated = pencil.evaluate(s1, s2)?;
    let mut shifted = -evaluated;
    for k in 0..big_n {
        shifted[[k, k]] += z;
    }
    let big_inv = linalg::inv(&shifted.view())?;
    let block = big_inv.slice(s![..big_n, ..big_n]);

    let pm = p.evaluate(s1, s2)?;
    let mut small = -pm;
    for k in 0..big_n {
        small[[k, k]] += z;
    }
    let small_inv = linalg::inv(&small.view())?;

    let diff = &block - &small_inv;
    Ok(linalg::spectral_norm(&diff.view()))
}
