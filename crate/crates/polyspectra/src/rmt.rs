//! Sampling and eigenvalue statistics for the unitarily invariant two-matrix
//! model.
//!
//! The model fixes two deterministic diagonals built from measure quantiles,
//! `c_N = diag(quantiles of μ_c)` and `D_N = diag(quantiles of μ_d)`, draws a
//! Haar unitary `U`, and studies `X_N = P(c_N, U D_N U*)` together with the
//! block resolvent
//!
//! ```text
//! R_N(β) = (β⊗I_N − γ1⊗c_N − γ2⊗d_N)^{-1},   d_N = U D_N U*.
//! ```
//!
//! From `R_N` it forms the Monte-Carlo approximate subordination functions
//! `ω_j^(N) = β − (𝔼G)^{-1}·𝔼f_j` and the covariance-type correction `Δ1`,
//! and it drives the window-count (local law) and eigenvector-delocalization
//! experiments.
//!
//! Operator-order note: block traces over `M_n ⊗ M_N` do not commute, and
//! with `f1 = M_n(tr)(R·(γ2⊗d_N))`, `f2 = M_n(tr)(R·(γ1⊗c_N))` the exact
//! per-sample identity is `f1 + f2 = −I + G·β` (the `G·β` order). The
//! companion identities `ω1N + ω2N = β + (𝔼G)^{-1}` and the δ-atom reductions
//! hold exactly as stated; for `n = 1` all orders coincide.
//!
//! Dense Hermitian eigenproblems go through LAPACK directly: two-stage
//! tridiagonalization (`zheev_2stage`) when only eigenvalues are needed,
//! divide-and-conquer (`zheevd`) when eigenvectors are needed. A row-major
//! Hermitian buffer read column-major is its conjugate, which has the same
//! eigenvalues and conjugated eigenvectors; the wrappers conjugate on the way
//! out so callers see eigenpairs of the matrix they passed in.

use crate::linalg;
use crate::linearize::LinearPencil;
use crate::ncpoly::NCPolynomial;
use crate::spectra::{quantile_diagonal, ScalarMeasure, SpectralPoint};
use crate::subordination::polynomial_density;
use crate::{Error, Result};
use ndarray::prelude::*;
use ndarray_linalg::types::c64;
use ndarray_linalg::QR;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[allow(clippy::too_many_arguments)]
extern "C" {
    fn zheev_2stage_(
        jobz: *const u8,
        uplo: *const u8,
        n: *const i32,
        a: *mut c64,
        lda: *const i32,
        w: *mut f64,
        work: *mut c64,
        lwork: *const i32,
        rwork: *mut f64,
        info: *mut i32,
    );
    fn zheevd_(
        jobz: *const u8,
        uplo: *const u8,
        n: *const i32,
        a: *mut c64,
        lda: *const i32,
        w: *mut f64,
        work: *mut c64,
        lwork: *const i32,
        rwork: *mut f64,
        lrwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );
    fn zherk_(
        uplo: *const u8,
        trans: *const u8,
        n: *const i32,
        k: *const i32,
        alpha: *const f64,
        a: *const c64,
        lda: *const i32,
        beta: *const f64,
        c: *mut c64,
        ldc: *const i32,
    );
}

/// `U·diag(t)·U†` as a signed sum of two Hermitian rank-k updates: half the
/// flops of a general product, exactly Hermitian output, zero weights skipped.
fn conjugate_diag(u: &ArrayView2<c64>, t: &[f64]) -> Array2<c64> {
    let n = u.nrows();
    let mut out = Array2::<c64>::zeros((n, n));
    for sign in [1.0f64, -1.0] {
        let cols: Vec<usize> = (0..n).filter(|&j| sign * t[j] > 0.0).collect();
        if cols.is_empty() {
            continue;
        }
        // Row j of this buffer is conj(u_col)·√|t|, so the column-major view
        // BLAS sees is conj(U·diag(√|t|)); the rank-k update then lands in
        // the buffer as the row-major upper triangle of U·diag(t)·U†.
        let scaled = Array2::from_shape_fn((cols.len(), n), |(j, i)| {
            u[[i, cols[j]]].conj() * t[cols[j]].abs().sqrt()
        });
        let (nn, kk) = (n as i32, cols.len() as i32);
        let (alpha, beta) = (sign, 1.0f64);
        unsafe {
            zherk_(
                &b'L'.to_owned(),
                &b'N'.to_owned(),
                &nn,
                &kk,
                &alpha,
                scaled.as_ptr(),
                &nn,
                &beta,
                out.as_mut_ptr(),
                &nn,
            );
        }
    }
    for i in 1..n {
        for j in 0..i {
            out[[i, j]] = out[[j, i]].conj();
        }
    }
    out
}

/// Eigenvalues (ascending) of a Hermitian matrix via two-stage reduction.
pub fn hermitian_eigenvalues(h: &ArrayView2<c64>) -> Result<Vec<f64>> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::Dim(format!(
            "eigenvalue solver needs a square matrix, got {}×{}",
            n,
            h.ncols()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = h.to_owned();
    let buf = a.as_slice_mut().expect("owned matrix is contiguous");
    let ni = n as i32;
    let mut w = vec![0.0f64; n];
    let mut rwork = vec![0.0f64; (3 * n).max(1)];
    let mut info = 0i32;
    let (jobz, uplo) = (b'N', b'L');
    let m1 = -1i32;
    let mut query = [c64::new(0.0, 0.0)];
    unsafe {
        zheev_2stage_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            query.as_mut_ptr(),
            &m1,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Solver(format!(
            "eigenvalue workspace query failed (info = {info})"
        )));
    }
    let lwork = (query[0].re as i32).max(1);
    let mut work = vec![c64::new(0.0, 0.0); lwork as usize];
    unsafe {
        zheev_2stage_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Solver(format!(
            "Hermitian eigenvalue solve failed (info = {info})"
        )));
    }
    Ok(w)
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian
/// matrix; column `m` of the returned matrix pairs with value `m`.
pub fn hermitian_eigen(h: &ArrayView2<c64>) -> Result<(Vec<f64>, Array2<c64>)> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::Dim(format!(
            "eigenvector solver needs a square matrix, got {}×{}",
            n,
            h.ncols()
        )));
    }
    let mut a = h.to_owned();
    let ni = n as i32;
    let mut w = vec![0.0f64; n.max(1)];
    let mut info = 0i32;
    let (jobz, uplo) = (b'V', b'L');
    let m1 = -1i32;
    let mut qwork = [c64::new(0.0, 0.0)];
    let mut qrwork = [0.0f64];
    let mut qiwork = [0i32];
    {
        let buf = a.as_slice_mut().expect("owned matrix is contiguous");
        unsafe {
            zheevd_(
                &jobz,
                &uplo,
                &ni,
                buf.as_mut_ptr(),
                &ni,
                w.as_mut_ptr(),
                qwork.as_mut_ptr(),
                &m1,
                qrwork.as_mut_ptr(),
                &m1,
                qiwork.as_mut_ptr(),
                &m1,
                &mut info,
            );
        }
    }
    if info != 0 {
        return Err(Error::Solver(format!(
            "eigen decomposition workspace query failed (info = {info})"
        )));
    }
    let lwork = (qwork[0].re as i32).max(1);
    let lrwork = (qrwork[0] as i32).max(1);
    let liwork = qiwork[0].max(1);
    let mut work = vec![c64::new(0.0, 0.0); lwork as usize];
    let mut rwork = vec![0.0f64; lrwork as usize];
    let mut iwork = vec![0i32; liwork as usize];
    {
        let buf = a.as_slice_mut().expect("owned matrix is contiguous");
        unsafe {
            zheevd_(
                &jobz,
                &uplo,
                &ni,
                buf.as_mut_ptr(),
                &ni,
                w.as_mut_ptr(),
                work.as_mut_ptr(),
                &lwork,
                rwork.as_mut_ptr(),
                &lrwork,
                iwork.as_mut_ptr(),
                &liwork,
                &mut info,
            );
        }
    }
    if info != 0 {
        return Err(Error::Solver(format!(
            "Hermitian eigen decomposition failed (info = {info})"
        )));
    }
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0))));
    }
    // LAPACK diagonalized conj(h) (row-major buffer read column-major) and
    // left its eigenvectors in the buffer's columns, i.e. in the rows of the
    // row-major array; conjugating and transposing yields eigenvectors of h
    // in the columns.
    let vectors = a.mapv(|z| z.conj()).reversed_axes();
    Ok((w, vectors))
}

/// Stable 64-bit mix for deriving independent per-trial seeds.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Haar-distributed unitary: complex Ginibre → QR → column phases fixed by
/// the unit phases of R's diagonal.
pub fn haar_unitary(n: usize, seed: u64) -> Array2<c64> {
    assert!(n >= 1, "Haar sampler needs n ≥ 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ginibre = Array2::from_shape_fn((n, n), |_| {
        c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let (mut q, r) = ginibre.qr().expect("QR of a Ginibre sample");
    for k in 0..n {
        let d = r[[k, k]];
        let m = d.norm();
        let phase = if m > 0.0 { d / m } else { c64::new(1.0, 0.0) };
        q.column_mut(k).mapv_inplace(|v| v * phase);
    }
    q
}

/// One draw of the matrix model: deterministic `c_N`, Haar-conjugated `d_N`.
#[derive(Debug, Clone)]
pub struct EnsembleSample {
    /// Matrix size N.
    pub size: usize,
    pub seed: u64,
    /// Diagonal of `c_N`: quantiles of `μ_c`, ascending.
    pub c_diag: Vec<f64>,
    /// Diagonal of `D_N`: quantiles of `μ_d`, ascending.
    pub d_quantiles: Vec<f64>,
    /// `d_N = U·D_N·U*`, Hermitian.
    pub d: Array2<c64>,
}

/// Samples `(c_N, d_N)` at size `size` from the given master seed.
pub fn sample_pair(
    mu_c: &ScalarMeasure,
    mu_d: &ScalarMeasure,
    size: usize,
    seed: u64,
) -> EnsembleSample {
    assert!(size >= 1, "matrix model needs size ≥ 1");
    let c_diag = quantile_diagonal(mu_c, size);
    let d_quantiles = quantile_diagonal(mu_d, size);
    let u = haar_unitary(size, seed);
    let d = conjugate_diag(&u.view(), &d_quantiles);
    EnsembleSample {
        size,
        seed,
        c_diag,
        d_quantiles,
        d,
    }
}

impl EnsembleSample {
    /// Evaluates a self-adjoint polynomial at `(c_N, d_N)`, exploiting the
    /// diagonality of `c_N` (products with it are row/column scalings).
    pub fn x_matrix(&self, p: &NCPolynomial) -> Result<Array2<c64>> {
        if !p.is_selfadjoint() {
            return Err(Error::NotSelfAdjoint(
                "matrix model evaluates self-adjoint polynomials".into(),
            ));
        }
        let n = self.size;
        let mut x = Array2::<c64>::zeros((n, n));
        for (word, &coeff) in p.terms() {
            match self.word_product(word.letters()) {
                WordProduct::Identity => {
                    for i in 0..n {
                        x[[i, i]] += coeff;
                    }
                }
                WordProduct::Diag(v) => {
                    for i in 0..n {
                        x[[i, i]] += coeff * v[i];
                    }
                }
                WordProduct::Dense(m) => {
                    x.scaled_add(coeff, &m);
                }
            }
        }
        Ok(linalg::hermitian_part(&x.view()))
    }

    fn word_product(&self, letters: &[u8]) -> WordProduct {
        let mut acc = WordProduct::Identity;
        for &letter in letters {
            acc = match (acc, letter) {
                (WordProduct::Identity, 1) => WordProduct::Diag(self.c_diag.clone()),
                (WordProduct::Identity, _) => WordProduct::Dense(self.d.clone()),
                (WordProduct::Diag(mut v), 1) => {
                    for (a, b) in v.iter_mut().zip(self.c_diag.iter()) {
                        *a *= b;
                    }
                    WordProduct::Diag(v)
                }
                (WordProduct::Diag(v), _) => {
                    let mut m = self.d.clone();
                    for (i, &s) in v.iter().enumerate() {
                        m.row_mut(i).mapv_inplace(|z| z * s);
                    }
                    WordProduct::Dense(m)
                }
                (WordProduct::Dense(mut m), 1) => {
                    for (j, &s) in self.c_diag.iter().enumerate() {
                        m.column_mut(j).mapv_inplace(|z| z * s);
                    }
                    WordProduct::Dense(m)
                }
                (WordProduct::Dense(m), _) => WordProduct::Dense(m.dot(&self.d)),
            };
        }
        acc
    }
}

enum WordProduct {
    Identity,
    Diag(Vec<f64>),
    Dense(Array2<c64>),
}

/// Resolvent of the linear model at one sample, with its block statistics.
#[derive(Debug, Clone)]
pub struct Resolvent {
    /// `(β⊗I − γ1⊗c_N − γ2⊗d_N)^{-1}`, size nN×nN.
    pub r: Array2<c64>,
    /// Blockwise normalized trace of `r` (n×n).
    pub g: Array2<c64>,
    /// `M_n(tr)(R·(γ2⊗d_N))`.
    pub f1: Array2<c64>,
    /// `M_n(tr)(R·(γ1⊗c_N))`.
    pub f2: Array2<c64>,
}

/// Builds `R_N(β)` and the statistics `G, f1, f2`; checks the resolvent norm
/// bound `‖R‖ ≤ ‖(ℑβ)^{-1}‖ + 1e−9` and the per-sample trace identity
/// `f1 + f2 + I = G·β` to 1e−12.
pub fn resolvent(
    pencil: &LinearPencil,
    sample: &EnsembleSample,
    point: &SpectralPoint,
) -> Result<Resolvent> {
    let n = pencil.n;
    let nb = sample.size;
    let beta = &point.beta;
    let mut m = Array2::<c64>::zeros((n * nb, n * nb));
    for j in 0..n {
        for k in 0..n {
            let mut block = m.slice_mut(s![j * nb..(j + 1) * nb, k * nb..(k + 1) * nb]);
            let b = beta[[j, k]];
            let g1 = pencil.gamma1[[j, k]];
            if b != c64::new(0.0, 0.0) || g1 != c64::new(0.0, 0.0) {
                for i in 0..nb {
                    block[[i, i]] = b - g1 * sample.c_diag[i];
                }
            }
            let g2 = pencil.gamma2[[j, k]];
            if g2 != c64::new(0.0, 0.0) {
                block.scaled_add(-g2, &sample.d);
            }
        }
    }
    let r = linalg::inv(&m.view())
        .map_err(|_| Error::Solver("singular linear model resolvent".into()))?;

    let im_beta = linalg::imag_part(&beta.view());
    let min_im = linalg::min_eig_hermitian(&im_beta.view());
    if min_im <= 0.0 {
        return Err(Error::Solver(
            "resolvent query point has non-positive imaginary part".into(),
        ));
    }
    let bound = 1.0 / min_im;
    let norm_est = spectral_norm_estimate(&r.view(), 80);
    if norm_est > bound + 1e-9 {
        return Err(Error::Solver(format!(
            "resolvent norm {norm_est:.6e} exceeds the half-plane bound {bound:.6e}"
        )));
    }

    let inv_n = 1.0 / nb as f64;
    let mut g = Array2::<c64>::zeros((n, n));
    let mut t_d = Array2::<c64>::zeros((n, n));
    let mut t_c = Array2::<c64>::zeros((n, n));
    let dt = sample.d.t();
    for j in 0..n {
        for l in 0..n {
            let block = r.slice(s![j * nb..(j + 1) * nb, l * nb..(l + 1) * nb]);
            let mut tr = c64::new(0.0, 0.0);
            let mut tr_c = c64::new(0.0, 0.0);
            for i in 0..nb {
                let rii = block[[i, i]];
                tr += rii;
                tr_c += rii * sample.c_diag[i];
            }
            g[[j, l]] = tr * inv_n;
            t_c[[j, l]] = tr_c * inv_n;
            // tr(R_jl · d) pairs R_jl entrywise with dᵀ.
            let mut tr_d = c64::new(0.0, 0.0);
            ndarray::Zip::from(&block).and(&dt).for_each(|&rv, &dv| {
                tr_d += rv * dv;
            });
            t_d[[j, l]] = tr_d * inv_n;
        }
    }
    let f1 = t_d.dot(&pencil.gamma2);
    let f2 = t_c.dot(&pencil.gamma1);

    let mut identity = g.dot(beta);
    identity -= &f1;
    identity -= &f2;
    for i in 0..n {
        identity[[i, i]] -= c64::new(1.0, 0.0);
    }
    let id_err = identity.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if id_err > 1e-12 {
        return Err(Error::Solver(format!(
            "trace identity f1 + f2 + I = G·β violated by {id_err:.3e}"
        )));
    }

    Ok(Resolvent { r, g, f1, f2 })
}

/// Iterative two-norm estimate by power iteration on `A*A` from a fixed
/// deterministic start; converges to the spectral norm from below.
pub fn spectral_norm_estimate(a: &ArrayView2<c64>, iters: usize) -> f64 {
    let n = a.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_shape_fn(n, |i| {
        c64::new(1.0, 0.35 + ((i * 2654435761) % 97) as f64 / 97.0)
    });
    let mut norm = (v.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
    v.mapv_inplace(|z| z / norm);
    let ah = a.t().mapv(|z| z.conj());
    let mut sigma = 0.0;
    for _ in 0..iters {
        let w = a.dot(&v);
        sigma = (w.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        v = ah.dot(&w);
        norm = (v.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.mapv_inplace(|z| z / norm);
    }
    sigma
}

/// Monte-Carlo estimates of the approximate subordination functions.
#[derive(Debug, Clone)]
pub struct ApproxSubordination {
    pub eg: Array2<c64>,
    pub ef1: Array2<c64>,
    pub ef2: Array2<c64>,
    /// `β − (𝔼G)^{-1}·𝔼f1`.
    pub omega1n: Array2<c64>,
    /// `β − (𝔼G)^{-1}·𝔼f2`.
    pub omega2n: Array2<c64>,
    pub trials: usize,
    /// Sup-entry error of `ω1N + ω2N − β − (𝔼G)^{-1}` (algebraically zero).
    pub sum_identity_error: f64,
    pub delta: Option<DeltaDiagnostics>,
}

/// Covariance-correction diagnostics from the two-pass estimator.
#[derive(Debug, Clone)]
pub struct DeltaDiagnostics {
    /// Two-norm estimate of the Δ1 correction (nN×nN).
    pub delta1_norm: f64,
    /// Two-norm estimate of `δ1 = (𝔼G)^{-1}·Δ1`.
    pub delta1_scaled_norm: f64,
    /// Mirrored Δ2 correction (the `γ2⊗d_N`, `f2` analog).
    pub delta2_norm: f64,
    pub delta2_scaled_norm: f64,
    /// Empirical defect of the unitary-invariance trace identity; zero in
    /// expectation, O(N^{-1/2}) per run.
    pub invariance_gap: f64,
    /// Frobenius residual of the exact remainder identity
    /// `(ω1N − γ1⊗c_N)·ÊR = I + (ÊG)^{-1}(Δ̂1 + gap)`; pure algebra, ~1e−13.
    pub remainder_residual: f64,
}

/// Two-pass Monte-Carlo estimate of the approximate subordination functions
/// and, optionally, the Δ-corrections, over `trials` independent samples.
#[allow(clippy::too_many_arguments)]
pub fn approx_subordination(
    pencil: &LinearPencil,
    mu_c: &ScalarMeasure,
    mu_d: &ScalarMeasure,
    size: usize,
    point: &SpectralPoint,
    trials: usize,
    seed: u64,
    with_delta: bool,
) -> Result<ApproxSubordination> {
    if trials < 2 {
        return Err(Error::Config(format!(
            "Monte-Carlo subordination needs at least 2 trials, got {trials}"
        )));
    }
    let n = pencil.n;
    let nn = n * size;
    let beta = &point.beta;
    let scale = c64::new(1.0 / trials as f64, 0.0);

    let mut sum_g = Array2::<c64>::zeros((n, n));
    let mut sum_f1 = Array2::<c64>::zeros((n, n));
    let mut sum_f2 = Array2::<c64>::zeros((n, n));
    let mut sum_r = with_delta.then(|| Array2::<c64>::zeros((nn, nn)));
    for t in 0..trials {
        let sample = sample_pair(mu_c, mu_d, size, mix_seed(seed, t as u64));
        let res = resolvent(pencil, &sample, point)?;
        sum_g += &res.g;
        sum_f1 += &res.f1;
        sum_f2 += &res.f2;
        if let Some(acc) = sum_r.as_mut() {
            *acc += &res.r;
        }
    }
    let eg = sum_g.mapv(|z| z * scale);
    let ef1 = sum_f1.mapv(|z| z * scale);
    let ef2 = sum_f2.mapv(|z| z * scale);
    let eg_inv = linalg::inv(&eg.view())
        .map_err(|_| Error::Solver("expected Cauchy transform is numerically singular".into()))?;
    let omega1n = beta - &eg_inv.dot(&ef1);
    let omega2n = beta - &eg_inv.dot(&ef2);

    let mut sum_check = &omega1n + &omega2n - beta - &eg_inv;
    let sum_identity_error = sum_check.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    sum_check.fill(c64::new(0.0, 0.0));

    let delta = if with_delta {
        let er = sum_r.unwrap().mapv(|z| z * scale);
        let mut acc_f1r = Array2::<c64>::zeros((nn, nn));
        let mut acc_gb1r = Array2::<c64>::zeros((nn, nn));
        let mut acc_f2r = Array2::<c64>::zeros((nn, nn));
        let mut acc_gb2r = Array2::<c64>::zeros((nn, nn));
        let mut acc_gap = Array2::<c64>::zeros((nn, nn));
        for t in 0..trials {
            let sample = sample_pair(mu_c, mu_d, size, mix_seed(seed, t as u64));
            let res = resolvent(pencil, &sample, point)?;
            let beta_r = kron_left_apply(&beta.view(), None, &res.r.view(), size);
            let w2r =
                kron_dense_left_apply(&pencil.gamma2.view(), &sample.d.view(), &res.r.view(), size);
            let g_centered = &res.g - &eg;
            let f1_centered = &res.f1 - &ef1;
            let f2_centered = &res.f2 - &ef2;
            acc_f1r += &kron_left_apply(&f1_centered.view(), None, &res.r.view(), size);
            acc_f2r += &kron_left_apply(&f2_centered.view(), None, &res.r.view(), size);
            // (β − γ1⊗c)·R and (β − γ2⊗d)·R share the β·R piece.
            let b1r = &beta_r
                - &kron_left_apply(
                    &pencil.gamma1.view(),
                    Some(&sample.c_diag),
                    &res.r.view(),
                    size,
                );
            let b2r = &beta_r - &w2r;
            acc_gb1r += &kron_left_apply(&g_centered.view(), None, &b1r.view(), size);
            acc_gb2r += &kron_left_apply(&g_centered.view(), None, &b2r.view(), size);
            // Invariance gap: G·(γ2⊗d)·R − f1·R, zero in expectation.
            acc_gap += &kron_left_apply(&res.g.view(), None, &w2r.view(), size);
            acc_gap -= &kron_left_apply(&res.f1.view(), None, &res.r.view(), size);
        }
        let delta1 = (&acc_f1r - &acc_gb1r).mapv(|z| z * scale);
        let delta2 = (&acc_f2r - &acc_gb2r).mapv(|z| z * scale);
        let gap = acc_gap.mapv(|z| z * scale);
        let delta1_scaled = kron_left_apply(&eg_inv.view(), None, &delta1.view(), size);
        let delta2_scaled = kron_left_apply(&eg_inv.view(), None, &delta2.view(), size);

        // Exact empirical remainder identity (checks the whole pipeline):
        // (ω1N − γ1⊗c)·ÊR − I = (ÊG)^{-1}·(Δ̂1 + gap).
        let mut lhs = kron_left_apply(&omega1n.view(), None, &er.view(), size);
        let sample0 = sample_pair(mu_c, mu_d, size, mix_seed(seed, 0));
        lhs -= &kron_left_apply(
            &pencil.gamma1.view(),
            Some(&sample0.c_diag),
            &er.view(),
            size,
        );
        for i in 0..nn {
            lhs[[i, i]] -= c64::new(1.0, 0.0);
        }
        let mut rhs = &delta1 + &gap;
        rhs = kron_left_apply(&eg_inv.view(), None, &rhs.view(), size);
        let remainder_residual = linalg::fro_norm(&(&lhs - &rhs).view());

        Some(DeltaDiagnostics {
            delta1_norm: spectral_norm_estimate(&delta1.view(), 60),
            delta1_scaled_norm: spectral_norm_estimate(&delta1_scaled.view(), 60),
            delta2_norm: spectral_norm_estimate(&delta2.view(), 60),
            delta2_scaled_norm: spectral_norm_estimate(&delta2_scaled.view(), 60),
            invariance_gap: spectral_norm_estimate(&gap.view(), 60),
            remainder_residual,
        })
    } else {
        None
    };

    Ok(ApproxSubordination {
        eg,
        ef1,
        ef2,
        omega1n,
        omega2n,
        trials,
        sum_identity_error,
        delta,
    })
}

/// `(m ⊗ s)·r` for block size `bs`, where `s` is the identity (`scale` =
/// `None`) or a real diagonal (`scale` = its entries).
fn kron_left_apply(
    m: &ArrayView2<c64>,
    scale: Option<&[f64]>,
    r: &ArrayView2<c64>,
    bs: usize,
) -> Array2<c64> {
    let n = m.nrows();
    let mut out = Array2::<c64>::zeros((n * bs, n * bs));
    for j in 0..n {
        for l in 0..n {
            let mjl = m[[j, l]];
            if mjl == c64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..n {
                let rblk = r.slice(s![l * bs..(l + 1) * bs, k * bs..(k + 1) * bs]);
                let mut oblk = out.slice_mut(s![j * bs..(j + 1) * bs, k * bs..(k + 1) * bs]);
                match scale {
                    None => oblk.scaled_add(mjl, &rblk),
                    Some(diag) => {
                        for i in 0..bs {
                            let w = mjl * diag[i];
                            oblk.row_mut(i).scaled_add(w, &rblk.row(i));
                        }
                    }
                }
            }
        }
    }
    out
}

/// `(m ⊗ d)·r` for a dense N×N factor `d`: computes `(I⊗d)·r` blockwise with
/// GEMMs, then combines blocks as in `kron_left_apply`.
fn kron_dense_left_apply(
    m: &ArrayView2<c64>,
    d: &ArrayView2<c64>,
    r: &ArrayView2<c64>,
    bs: usize,
) -> Array2<c64> {
    let n = m.nrows();
    let mut dr = Array2::<c64>::zeros((n * bs, n * bs));
    for l in 0..n {
        for k in 0..n {
            let rblk = r.slice(s![l * bs..(l + 1) * bs, k * bs..(k + 1) * bs]);
            let prod = d.dot(&rblk);
            dr.slice_mut(s![l * bs..(l + 1) * bs, k * bs..(k + 1) * bs])
                .assign(&prod);
        }
    }
    kron_left_apply(m, None, &dr.view(), bs)
}

/// Count of sorted eigenvalues in the closed window `[x−eta, x+eta]`, and
/// the normalized ratio `M / (2·N·eta)` with `N` the full spectrum length.
pub fn count_window(sorted: &[f64], x: f64, eta: f64) -> (usize, f64) {
    assert!(eta > 0.0, "window half-width must be positive");
    let lo = sorted.partition_point(|&v| v < x - eta);
    let hi = sorted.partition_point(|&v| v <= x + eta);
    let m = hi - lo;
    let ratio = if sorted.is_empty() {
        0.0
    } else {
        m as f64 / (2.0 * sorted.len() as f64 * eta)
    };
    (m, ratio)
}

/// Count in the half-open window `[a, b)`; adjacent windows partition.
pub fn count_window_half_open(sorted: &[f64], a: f64, b: f64) -> usize {
    sorted.partition_point(|&v| v < b) - sorted.partition_point(|&v| v < a)
}

/// One row of the local-law experiment: window-count ratios vs the limiting
/// density at a single `(N, x)`.
#[derive(Debug, Clone)]
pub struct LocalLawRow {
    pub size: usize,
    pub x: f64,
    /// `η* = c·N^{−1/12}·ln N`.
    pub eta_star: f64,
    /// Window half-width `(η*)^α`.
    pub half_width: f64,
    pub trials: usize,
    pub mean_ratio: f64,
    pub median_ratio: f64,
    pub std_ratio: f64,
    /// Limiting density at `x` from the subordination solver.
    pub rho_ref: f64,
    pub median_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct LocalLawReport {
    pub alpha: f64,
    pub c_const: f64,
    pub rows: Vec<LocalLawRow>,
}

/// Window-count experiment at scale `η* = c·N^{−1/12}·ln N`, window
/// half-width `(η*)^α`, against the subordination-solver density.
#[allow(clippy::too_many_arguments)]
pub fn local_law_experiment(
    p: &NCPolynomial,
    mu_c: &ScalarMeasure,
    mu_d: &ScalarMeasure,
    x_points: &[f64],
    sizes: &[usize],
    alpha: f64,
    trials: usize,
    seed: u64,
    c_const: f64,
) -> Result<LocalLawReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if trials == 0 || sizes.is_empty() || x_points.is_empty() {
        return Err(Error::Config(
            "local-law experiment needs trials ≥ 1, sizes, and x points".into(),
        ));
    }
    if !(c_const > 0.0 && c_const.is_finite()) {
        return Err(Error::Config(format!(
            "window-scale constant must be positive, got {c_const}"
        )));
    }
    // Reference densities, one subordination solve per x.
    let mut rho_ref = Vec::with_capacity(x_points.len());
    for &x in x_points {
        let curve = polynomial_density(p, mu_c, mu_d, (x, x + 1.0), 1, 1e-6, 0.5)?;
        rho_ref.push(curve.rho[0]);
    }

    let mut rows = Vec::new();
    for &size in sizes {
        let eta_star = c_const * (size as f64).powf(-1.0 / 12.0) * (size as f64).ln();
        let half_width = eta_star.powf(alpha);
        let mut ratios = vec![Vec::with_capacity(trials); x_points.len()];
        for t in 0..trials {
            let trial_seed = mix_seed(mix_seed(seed, size as u64), t as u64);
            let sample = sample_pair(mu_c, mu_d, size, trial_seed);
            let x_mat = sample.x_matrix(p)?;
            let values = hermitian_eigenvalues(&x_mat.view())?;
            for (xi, &x) in x_points.iter().enumerate() {
                let (_, ratio) = count_window(&values, x, half_width);
                ratios[xi].push(ratio);
            }
        }
        for (xi, &x) in x_points.iter().enumerate() {
            let rs = &ratios[xi];
            let mean = rs.iter().sum::<f64>() / rs.len() as f64;
            let var = rs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / rs.len() as f64;
            let rho = rho_ref[xi];
            let mut rel: Vec<f64> = rs.iter().map(|r| (r - rho).abs() / rho.abs()).collect();
            rows.push(LocalLawRow {
                size,
                x,
                eta_star,
                half_width,
                trials,
                mean_ratio: mean,
                median_ratio: median(rs.clone()),
                std_ratio: var.sqrt(),
                rho_ref: rho,
                median_rel_error: median(std::mem::take(&mut rel)),
            });
        }
    }
    Ok(LocalLawReport {
        alpha,
        c_const,
        rows,
    })
}

/// Sorted eigenvalues with optional orthonormal eigenvectors (column `m`
/// pairs with value `m`).
#[derive(Debug, Clone)]
pub struct EigenData {
    pub values: Vec<f64>,
    pub vectors: Option<Array2<c64>>,
}

/// Eigen-decomposition of a Hermitian matrix, with or without vectors.
pub fn eigen_data(x: &ArrayView2<c64>, with_vectors: bool) -> Result<EigenData> {
    if with_vectors {
        let (values, vectors) = hermitian_eigen(x)?;
        Ok(EigenData {
            values,
            vectors: Some(vectors),
        })
    } else {
        Ok(EigenData {
            values: hermitian_eigenvalues(x)?,
            vectors: None,
        })
    }
}

/// Largest squared eigenvector coordinate over eigenvectors with eigenvalue
/// in the closed `interval`; `None` when the interval holds no eigenvalue.
pub fn deloc_statistic(eigen: &EigenData, interval: (f64, f64)) -> Result<Option<f64>> {
    let (a, b) = interval;
    if !(a <= b) {
        return Err(Error::Config(format!(
            "delocalization interval must satisfy a ≤ b, got [{a}, {b}]"
        )));
    }
    let vectors = eigen
        .vectors
        .as_ref()
        .ok_or_else(|| Error::Config("delocalization statistic needs eigenvectors".into()))?;
    let lo = eigen.values.partition_point(|&v| v < a);
    let hi = eigen.values.partition_point(|&v| v <= b);
    if lo == hi {
        return Ok(None);
    }
    let mut stat = 0.0f64;
    for m in lo..hi {
        for v in vectors.column(m) {
            stat = stat.max(v.norm_sqr());
        }
    }
    Ok(Some(stat))
}

/// One row of the delocalization experiment.
#[derive(Debug, Clone)]
pub struct DelocRow {
    pub size: usize,
    /// Trials that had at least one eigenvalue in the interval.
    pub trials_with_data: usize,
    pub median_stat: f64,
    pub max_stat: f64,
    /// `N^{−α/12}·ln N`, the scale the statistic is reported against.
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct DelocReport {
    pub alpha: f64,
    pub interval: (f64, f64),
    pub rows: Vec<DelocRow>,
}

/// Eigenvector-delocalization experiment: the max squared coordinate over
/// in-interval eigenvectors, summarized per size against `N^{−α/12}·ln N`.
#[allow(clippy::too_many_arguments)]
pub fn deloc_experiment(
    p: &NCPolynomial,
    mu_c: &ScalarMeasure,
    mu_d: &ScalarMeasure,
    interval: (f64, f64),
    sizes: &[usize],
    alpha: f64,
    trials: usize,
    seed: u64,
) -> Result<DelocReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if trials == 0 || sizes.is_empty() {
        return Err(Error::Config(
            "delocalization experiment needs trials ≥ 1 and sizes".into(),
        ));
    }
    if !(interval.0 < interval.1) {
        return Err(Error::Config(format!(
            "delocalization interval must satisfy a < b, got [{}, {}]",
            interval.0, interval.1
        )));
    }
    let mut rows = Vec::new();
    for &size in sizes {
        let mut stats = Vec::new();
        for t in 0..trials {
            let trial_seed = mix_seed(mix_seed(seed, size as u64), t as u64);
            let sample = sample_pair(mu_c, mu_d, size, trial_seed);
            let x_mat = sample.x_matrix(p)?;
            let eigen = eigen_data(&x_mat.view(), true)?;
            if let Some(stat) = deloc_statistic(&eigen, interval)? {
                stats.push(stat);
            }
        }
        let threshold = (size as f64).powf(-alpha / 12.0) * (size as f64).ln();
        let max_stat = stats.iter().cloned().fold(0.0f64, f64::max);
        rows.push(DelocRow {
            size,
            trials_with_data: stats.len(),
            median_stat: if stats.is_empty() {
                f64::NAN
            } else {
                median(stats)
            },
            max_stat,
            threshold,
        });
    }
    Ok(DelocReport {
        alpha,
        interval,
        rows,
    })
}

/// Empirical measure of a finite spectrum: equal-weight atoms.
pub fn empirical_measure(values: &[f64]) -> Result<ScalarMeasure> {
    if values.is_empty() {
        return Err(Error::Measure(
            "empirical measure of an empty spectrum".into(),
        ));
    }
    let w = 1.0 / values.len() as f64;
    ScalarMeasure::atoms(values.iter().map(|&v| (v, w)).collect())
}

/// `max(d_L(μ_{c_N}, μ_c), d_L(μ_{d_N}, μ_d))` for one sample.
pub fn sample_levy_distance(
    sample: &EnsembleSample,
    mu_c: &ScalarMeasure,
    mu_d: &ScalarMeasure,
) -> Result<f64> {
    let emp_c = empirical_measure(&sample.c_diag)?;
    let d_values = hermitian_eigenvalues(&sample.d.view())?;
    let emp_d = empirical_measure(&d_values)?;
    let lc = crate::spectra::levy_distance(&emp_c, mu_c);
    let ld = crate::spectra::levy_distance(&emp_d, mu_d);
    Ok(lc.max(ld))
}

fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty(), "median of an empty set");
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
