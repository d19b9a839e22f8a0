//! Solver for the matrix-valued subordination system.
//!
//! Given a Hermitian pencil with coefficients `γ1, γ2` and two scalar
//! measures `μ_c, μ_d`, the subordination functions `ω1, ω2` at a query `β`
//! (with positive-definite imaginary part) satisfy
//!
//! ```text
//! G_c(ω1(β)) = G_d(ω2(β)) = (ω1(β) + ω2(β) − β)^{-1},
//! ```
//!
//! where `G_c(w) = ∫ (w − tγ1)^{-1} μ_c(dt)` and likewise for `G_d`. The
//! solver runs a damped-able fixed-point iteration
//! `ω1 ← β + h_d(β + h_c(ω1))` (globally convergent, linear rate) followed by
//! a Newton refinement on the vectorized `2n²`-dimensional residual system
//! (quadratic rate near the solution, with Kantorovich diagnostics guarding
//! the basin). An η-continuation drives the regularization down a geometric
//! schedule with warm starts, which is how densities are evaluated a distance
//! `η^α` above the real axis.

use crate::linalg;
use crate::linearize::{linearize_selfadjoint, LinearPencil};
use crate::ncpoly::NCPolynomial;
use crate::spectra::{
    cauchy_and_kron, matrix_cauchy, min_sv_over_support, stieltjes_density, ScalarMeasure,
    SpectralPoint,
};
use crate::{Error, Result};
use ndarray::prelude::*;
use ndarray::ShapeBuilder;
use ndarray_linalg::types::c64;
use ndarray_linalg::Solve;
use rayon::prelude::*;

/// Residual target for the fixed-point stage of the hybrid solve.
pub const FIXED_POINT_TOL: f64 = 1e-4;
/// Residual target for the Newton stage of the hybrid solve.
pub const NEWTON_TOL: f64 = 1e-11;
/// Iteration cap for one fixed-point stage.
pub const FIXED_POINT_MAX_ITER: usize = 2000;
/// Step cap for one Newton refinement.
pub const NEWTON_MAX_STEPS: usize = 25;
/// Default threshold for the regularity report.
pub const DEFAULT_TAU: f64 = 1e-3;

/// How a subordination pair was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    FixedPoint,
    NewtonRefined,
}

/// A solved (or best-effort) subordination pair at one query point.
#[derive(Debug, Clone)]
pub struct SubordinationPair {
    pub omega1: Array2<c64>,
    pub omega2: Array2<c64>,
    pub point: SpectralPoint,
    /// `max(‖G_c(ω1) − K‖, ‖G_d(ω2) − K‖)` with `K = (ω1+ω2−β)^{-1}`.
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    pub converged: bool,
}

/// Kantorovich data from the start of a Newton refinement.
#[derive(Debug, Clone)]
pub struct NewtonDiagnostics {
    /// Bound on the inverse derivative: `1/σ_min(J)`.
    pub c0: f64,
    /// Norm of the first Newton step.
    pub delta0: f64,
    /// Second-derivative bound `4·C³` with `C` the largest resolvent norm.
    pub a_bound: f64,
    /// `C0·δ0·A`; Newton is certified when this stays ≤ ½.
    pub h0: f64,
    /// Residuals before/after each accepted step.
    pub residual_history: Vec<f64>,
}

/// One stage of an η-continuation.
#[derive(Debug, Clone)]
pub struct EtaStage {
    pub eta: f64,
    pub residual: f64,
    pub iterations: usize,
    pub h0: Option<f64>,
}

/// Final pair plus the per-η audit trail.
#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub pair: SubordinationPair,
    pub trail: Vec<EtaStage>,
}

/// Density curve with per-point solver health data.
#[derive(Debug, Clone)]
pub struct DensityCurve {
    pub x_grid: Vec<f64>,
    pub rho: Vec<f64>,
    pub eta_final: f64,
    pub regularity_flags: Vec<bool>,
    pub residuals: Vec<f64>,
    pub cond_a_min_sv: Vec<f64>,
    pub cond_b_min_sv: Vec<f64>,
}

/// Numerical regularity check at a solved pair.
#[derive(Debug, Clone)]
pub struct RegularityReport {
    /// `min_t σ_min(ω1 − tγ1)` over the quadrature nodes of `μ_c`.
    pub min_sv_cond_a_c: f64,
    /// `min_t σ_min(ω2 − tγ2)` over the quadrature nodes of `μ_d`.
    pub min_sv_cond_a_d: f64,
    /// `σ_min` of the assembled `2n²×2n²` derivative map.
    pub min_sv_cond_b: f64,
    pub tau: f64,
    pub pass: bool,
}

/// `h(b) = G(b)^{-1} − b` for `G(b) = ∫ (b − tγ)^{-1} μ(dt)`.
pub fn h_transform(
    gamma: &ArrayView2<c64>,
    mu: &ScalarMeasure,
    b: &ArrayView2<c64>,
) -> Result<Array2<c64>> {
    let g = matrix_cauchy(gamma, mu, b)?;
    let ginv = linalg::inv(&g.view())
        .map_err(|_| Error::Solver("singular Cauchy transform in h-transform".into()))?;
    Ok(&ginv - b)
}

/// Subordination residual `max(‖G_c(ω1) − K‖, ‖G_d(ω2) − K‖)`,
/// `K = (ω1+ω2−β)^{-1}`, in spectral norm.
pub fn subordination_residual(
    gamma1: &ArrayView2<c64>,
    mu_c: &ScalarMeasure,
    gamma2: &ArrayView2<c64>,
    mu_d: &ScalarMeasure,
    beta: &ArrayView2<c64>,
    omega1: &ArrayView2<c64>,
    omega2: &ArrayView2<c64>,
) -> Result<f64> {
    let k = linalg::inv(&(omega1 + omega2 - beta).view())?;
    let r1 = &matrix_cauchy(gamma1, mu_c, omega1)? - &k;
    let r2 = &matrix_cauchy(gamma2, mu_d, omega2)? - &k;
    Ok(linalg::spectral_norm(&r1.view()).max(linalg::spectral_norm(&r2.view())))
}

/// Fixed-point solve of the subordination system.
///
/// Iterates `ω1 ← β + h_d(β + h_c(ω1))` from `ω1 = β + i·I` until the update
/// norm drops below `tol` or `max_iter` is hit; then sets `ω2 = β + h_c(ω1)`
/// and records the residual. Non-convergence returns the best iterate with
/// `converged = false`.
pub fn fixed_point_solve(
    gamma1: &ArrayView2<c64>,
    mu_c: &ScalarMeasure,
    gamma2: &ArrayView2<c64>,
    mu_d: &ScalarMeasure,
    beta: &SpectralPoint,
    tol: f64,
    max_iter: usize,
) -> Result<SubordinationPair> {
    let init = initial_guess(&beta.beta.view());
    fixed_point_from(gamma1, mu_c, gamma2, mu_d, beta, init, tol, max_iter, 1.0)
}

fn initial_guess(beta: &ArrayView2<c64>) -> Array2<c64> {
    let mut w = beta.to_owned();
    for k in 0..w.nrows() {
        w[[k, k]] += c64::new(0.0, 1.0);
    }
    w
}

/// Fixed-point iteration from an explicit start, with damping `lambda ≤ 1`:
/// `ω1 ← (1−λ)·ω1 + λ·(β + h_d(β + h_c(ω1)))`.
#[allow(clippy::too_many_arguments)]
fn fixed_point_from(
    gamma1: &ArrayView2<c64>,
    mu_c: &ScalarMeasure,
    gamma2: &ArrayView2<c64>,
    mu_d: &ScalarMeasure,
    beta: &SpectralPoint,
    start: Array2<c64>,
    tol: f64,
    max_iter: usize,
    lambda: f64,
) -> Result<SubordinationPair> {
    let b = &beta.beta;
    let mut omega1 = start;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let omega2 = b + &h_transform(gamma1, mu_c, &omega1.view())?;
        let next = b + &h_transform(gamma2, mu_d, &omega2.view())?;
        let step = &next - &omega1;
        let step_norm = linalg::fro_norm(&step.view());
        omega1 = if lambda < 1.0 {
            &omega1 + &(step * c64::new(lambda, 0.0))
        } else {
            next
        };
        if step_norm < tol {
            converged = true;
            break;
        }
    }
    let omega2 = b + &h_transform(gamma1, mu_c, &omega1.view())?;
    let residual = subordination_residual(
        gamma1,
        mu_c,
        gamma2,
        mu_d,
        &b.view(),
        &omega1.view(),
        &omega2.view(),
    )?;
    Ok(SubordinationPair {
        omega1,
        omega2,
        point: beta.clone(),
        residual,
        iterations,
        method: SolveMethod::FixedPoint,
        converged,
    })
}

/// Column-stacking vectorization (matches `vec(AXB) = (Bᵀ⊗A)·vec(X)`).
fn vec_col(a: &ArrayView2<c64>) -> Array1<c64> {
    Array1::from_iter(a.t().iter().cloned())
}

fn unvec_col(v: &[c64], n: usize) -> Array2<c64> {
    Array2::from_shape_vec((n, n).f(), v.to_vec()).expect("unvec shape")
}

/// Residual pieces at `(w1, w2)`: `F1 = K − G_c(w1)`, `F2 = K − G_d(w2)`,
/// plus `K` and the two Kronecker integrals for the derivative.
struct SystemEval {
    f1: Array2<c64>,
    f2: Array2<c64>,
    k: Array2<c64>,
    kron_c: Array2<c64>,
    kron_d: Array2<c64>,
}

fn eval_system(
    gamma1: &ArrayView2<c64>,
    mu_c: &ScalarMeasure,
    gamma2: &ArrayView2<c64>,
    mu_d: &ScalarMeasure,
    beta: &ArrayView2<c64>,
    w1: &ArrayView2<c64>,
    w2: &ArrayView2<c64>,
) -> Result<SystemEval> {
    let k = linalg::inv(&(w1 + w2 - beta).view())?;
    let (gc, kron_c) = cauchy_and_kron(gamma1, mu_c, w1)?;
    let (gd, kron_d) = cauchy_and_kron(gamma2, mu_d, w2)?;
    Ok(SystemEval {
        f1: &k - &gc,
        f2: &k - &gd,
        k,
        kron_c,
        kron_d,
    })
}

fn residual_norm(sys: &SystemEval) -> f64 {
    linalg::spectral_norm(&sys.f1.view()).max(linalg::spectral_norm(&sys.f2.view()))
}

/// Derivative of the residual system as a `2n²×2n²` matrix in the
/// column-stacking convention:
/// `dF1[b1,b2] = −K(b1+b2)K + ∫ (w1−tγ1)^{-1} b1 (w1−tγ1)^{-1} μ_c(dt)`
/// and symmetrically for `dF2`.
/// Residual matrices of the subordination system at a trial pair:
/// `(G_c(ω1) − K, G_d(ω2) − K)` with `K = (ω1 + ω2 − β)^{-1}`.
#[allow(clippy::too_many_arguments)]
pub fn system_value(
    gamma1: &ArrayView2<c64>,
    mu_c: &ScalarMeasure,
    gamma2: &ArrayView2<c64>,
    mu_d: &ScalarMeasure,
    beta: &ArrayView2<c64>,
    omega1: &ArrayView2<c64>,
    omega2: &ArrayView2<c64>,
) -> Result<(Array2<c64>, Array2<c64>)> {
    let sys = eval_system(gamma1, mu_c, gamma2, mu_d, beta, omega1, omega2)?;
    Ok((sys.f1, sys.f2))
}

/// Assembled `2n²×2n²` derivative of the vectorized system at a trial pair
/// (the condition-B matrix), in column-stacking convention.
#[allow(clippy::too_many_arguments)]
pub fn system_derivative(
    gamma1: &ArrayView2<c64>,
    mu_c: &ScalarMeasure,
    gamma2: &ArrayView2<c64>,
    mu_d: &ScalarMeasure,
    beta: &ArrayView2<c64>,
    omega1: &ArrayView2<c64>,
    omega2: &ArrayView2<c64>,
) -> Result<Array2<c64>> {
    let sys = eval_system(gamma1, mu_c, gamma2, mu_d, beta, omega1, omega2)?;
    Ok(assemble_jacobian(&sys))
}

fn assemble_jacobian(sys: &SystemEval) -> Array2<c64> {
    let n = sys.k.nrows();
    let n2 = n * n;
    let kt = sys.k.t().to_owned();
    let kk = linalg::kron(&kt.view(), &sys.k.view());
    let mut j = Array2::<c64>::zeros((2 * n2, 2 * n2));
    j.slice_mut(s![..n2, ..n2]).assign(&(&sys.kron_c - &kk));
    j.slice_mut(s![..n2, n2..]).assign(&(-&kk));
    j.slice_mut(s![n2.., ..n2]).assign(&(-&kk));
    j.slice_mut(s![n2.., n2..]).assign(&(&sys.kron_d - &kk));
    j
}

/// Newton refinement of a subordination pair on the vectorized system.
///
/// Computes Kantorovich diagnostics from the starting point, then iterates
/// full Newton steps until the residual drops below `tol`. Errors on a
/// singular derivative or on three consecutive residual increases.
pub fn newton_refine(
    pair: &SubordinationPair,
    gamma1: &ArrayView2<c64>,
    mu_c: &ScalarMeasure,
    gamma2: &ArrayView2<c64>,
    mu_d: &ScalarMeasure,
    tol: f64,
) -> Result<(SubordinationPair, NewtonDiagnostics)> {
    let beta = pair.point.beta.clone();
    let n = beta.nrows();
    let n2 = n * n;
    let mut w1 = pair.omega1.clone();
    let mut w2 = pair.omega2.clone();

    let mut sys = eval_system(
        gamma1,
        mu_c,
        gamma2,
        mu_d,
        &beta.view(),
        &w1.view(),
        &w2.view(),
    )?;
    let mut residual = residual_norm(&sys);
    let mut history = vec![residual];

    // Kantorovich data at the starting point.
    let j0 = assemble_jacobian(&sys);
    let smin = linalg::min_singular_value(&j0.view());
    if smin <= 0.0 || !smin.is_finite() {
        return Err(Error::Solver(
            "singular derivative map at the Newton starting point".into(),
        ));
    }
    let c0 = 1.0 / smin;
    let step0 = newton_step(&j0, &sys, n2)?;
    let delta0 = step0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let res_c = 1.0 / min_sv_over_support(gamma1, mu_c, &w1.view())?;
    let res_d = 1.0 / min_sv_over_support(gamma2, mu_d, &w2.view())?;
    let cbound = linalg::spectral_norm(&sys.k.view()).max(res_c).max(res_d);
    let a_bound = 4.0 * cbound.powi(3);
    let h0 = c0 * delta0 * a_bound;

    let mut steps = 0;
    let mut increases = 0;
    let mut delta = step0;
    while residual >= tol && steps < NEWTON_MAX_STEPS {
        w1 += &unvec_col(&delta.as_slice().unwrap()[..n2], n);
        w2 += &unvec_col(&delta.as_slice().unwrap()[n2..], n);
        steps += 1;
        sys = eval_system(
            gamma1,
            mu_c,
            gamma2,
            mu_d,
            &beta.view(),
            &w1.view(),
            &w2.view(),
        )?;
        let new_residual = residual_norm(&sys);
        history.push(new_residual);
        if new_residual > residual {
            increases += 1;
            if increases >= 3 {
                return Err(Error::Solver(format!(
                    "Newton iteration diverging: residual rose 3 consecutive steps to {new_residual:.3e}"
                )));
            }
        } else {
            increases = 0;
        }
        residual = new_residual;
        if residual < tol {
            break;
        }
        let j = assemble_jacobian(&sys);
        delta = newton_step(&j, &sys, n2)?;
    }

    let refined = SubordinationPair {
        omega1: w1,
        omega2: w2,
        point: pair.point.clone(),
        residual,
        iterations: pair.iterations + steps,
        method: SolveMethod::NewtonRefined,
        converged: residual < tol,
    };
    let diagnostics = NewtonDiagnostics {
        c0,
        delta0,
        a_bound,
        h0,
        residual_history: history,
    };
    Ok((refined, diagnostics))
}

/// Solves `J·δ = −vec(F)` for one Newton step.
fn newton_step(j: &Array2<c64>, sys: &SystemEval, n2: usize) -> Result<Array1<c64>> {
    let mut rhs = Array1::<c64>::zeros(2 * n2);
    rhs.slice_mut(s![..n2]).assign(&vec_col(&sys.f1.view()));
    rhs.slice_mut(s![n2..]).assign(&vec_col(&sys.f2.view()));
    rhs *= c64::new(-1.0, 0.0);
    j.solve(&rhs)
        .map_err(|e| Error::Solver(format!("Newton linear solve failed: {e}")))
}

/// Hybrid solve: fixed point to `FIXED_POINT_TOL`, Newton to `tol`, with a
/// damped fixed-point fallback (λ = ½) when Newton is uncertified (h0 > ½)
/// or diverges. Errors when all rounds are exhausted.
pub fn hybrid_solve(
    gamma1: &ArrayView2<c64>,
    mu_c: &ScalarMeasure,
    gamma2: &ArrayView2<c64>,
    mu_d: &ScalarMeasure,
    beta: &SpectralPoint,
    tol: f64,
    warm_start: Option<&Array2<c64>>,
) -> Result<(SubordinationPair, Option<NewtonDiagnostics>)> {
    let start = warm_start
        .cloned()
        .unwrap_or_else(|| initial_guess(&beta.beta.view()));
    let mut pair = fixed_point_from(
        gamma1,
        mu_c,
        gamma2,
        mu_d,
        beta,
        start,
        FIXED_POINT_TOL,
        FIXED_POINT_MAX_ITER,
        1.0,
    )?;
    if pair.residual < tol {
        return Ok((pair, None));
    }
    let mut last_diag = None;
    for _round in 0..3 {
        match newton_refine(&pair, gamma1, mu_c, gamma2, mu_d, tol) {
            Ok((refined, diag)) => {
                let certified = diag.h0 <= 0.5;
                let converged = refined.converged;
                if converged {
                    return Ok((refined, Some(diag)));
                }
                last_diag = Some(diag);
                if certified {
                    // Certified but step-capped: keep the refined iterate.
                    pair = refined;
                    continue;
                }
            }
            Err(Error::Solver(_)) => {}
            Err(e) => return Err(e),
        }
        // Newton unusable from here: contract with a damped fixed point.
        pair = fixed_point_from(
            gamma1,
            mu_c,
            gamma2,
            mu_d,
            beta,
            pair.omega1.clone(),
            (pair.residual * 1e-2).max(1e-14),
            50,
            0.5,
        )?;
    }
    if pair.residual < tol {
        return Ok((pair, last_diag));
    }
    Err(Error::Solver(format!(
        "no convergence at η = {:.3e}: residual {:.3e} after hybrid rounds",
        beta.eta, pair.residual
    )))
}

/// Geometric η schedule with ratio ½ from 1.0 down to (and including) `eta_min`.
pub fn default_eta_schedule(eta_min: f64) -> Vec<f64> {
    let mut schedule = Vec::new();
    let mut eta = 1.0;
    while eta > eta_min {
        schedule.push(eta);
        eta *= 0.5;
    }
    schedule.push(eta_min);
    schedule
}

/// Solves along a decreasing η schedule with warm starts.
///
/// The largest η starts from the default guess; each smaller η starts from
/// the previous solution. Failures carry the η at which they occurred.
pub fn eta_continuation(
    pencil: &LinearPencil,
    mu_c: &ScalarMeasure,
    mu_d: &ScalarMeasure,
    z: c64,
    eta_schedule: &[f64],
    alpha: f64,
) -> Result<ContinuationResult> {
    eta_continuation_with(pencil, mu_c, mu_d, z, eta_schedule, alpha, NEWTON_TOL)
}

/// [`eta_continuation`] with an explicit residual tolerance.
pub fn eta_continuation_with(
    pencil: &LinearPencil,
    mu_c: &ScalarMeasure,
    mu_d: &ScalarMeasure,
    z: c64,
    eta_schedule: &[f64],
    alpha: f64,
    tol: f64,
) -> Result<ContinuationResult> {
    if eta_schedule.is_empty() {
        return Err(Error::Config("η schedule must be nonempty".into()));
    }
    if eta_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(
            "η schedule must be strictly decreasing".into(),
        ));
    }
    let last = *eta_schedule.last().unwrap();
    if last <= 0.0 {
        return Err(Error::Config(format!(
            "η schedule must end above zero, got {last}"
        )));
    }
    let mut trail = Vec::with_capacity(eta_schedule.len());
    let mut current: Option<SubordinationPair> = None;
    for &eta in eta_schedule {
        let point = SpectralPoint::new(z, eta, alpha, &pencil.gamma0.view())?;
        let warm = current.as_ref().map(|p| p.omega1.clone());
        let solved = hybrid_solve(
            &pencil.gamma1.view(),
            mu_c,
            &pencil.gamma2.view(),
            mu_d,
            &point,
            tol,
            warm.as_ref(),
        )
        .map_err(|e| Error::Solver(format!("η = {eta:.3e}: {e}")))?;
        trail.push(EtaStage {
            eta,
            residual: solved.0.residual,
            iterations: solved.0.iterations,
            h0: solved.1.as_ref().map(|d| d.h0),
        });
        current = Some(solved.0);
    }
    Ok(ContinuationResult {
        pair: current.unwrap(),
        trail,
    })
}

/// Numerical regularity check: smallest singular values of `ω_j − tγ_j` over
/// quadrature nodes (condition A) and of the derivative map (condition B).
/// Never errors; failures report 0 for the affected quantity.
pub fn regularity_check(
    pair: &SubordinationPair,
    gamma1: &ArrayView2<c64>,
    mu_c: &ScalarMeasure,
    gamma2: &ArrayView2<c64>,
    mu_d: &ScalarMeasure,
    tau: f64,
) -> RegularityReport {
    let a_c = min_sv_over_support(gamma1, mu_c, &pair.omega1.view()).unwrap_or(0.0);
    let a_d = min_sv_over_support(gamma2, mu_d, &pair.omega2.view()).unwrap_or(0.0);
    let b_sv = eval_system(
        gamma1,
        mu_c,
        gamma2,
        mu_d,
        &pair.point.beta.view(),
        &pair.omega1.view(),
        &pair.omega2.view(),
    )
    .map(|sys| linalg::min_singular_value(&assemble_jacobian(&sys).view()))
    .unwrap_or(0.0);
    RegularityReport {
        min_sv_cond_a_c: a_c,
        min_sv_cond_a_d: a_d,
        min_sv_cond_b: b_sv,
        tau,
        pass: a_c >= tau && a_d >= tau && b_sv >= tau,
    }
}

/// Density of a self-adjoint polynomial in the two limiting variables on a
/// grid over `interval`, evaluated at `z = x + i·eta_min^alpha` after an
/// η-continuation down to `eta_min`.
///
/// Per-point solver failures clear the regularity flag and report density 0.
pub fn polynomial_density(
    p: &NCPolynomial,
    mu_c: &ScalarMeasure,
    mu_d: &ScalarMeasure,
    interval: (f64, f64),
    grid_points: usize,
    eta_min: f64,
    alpha: f64,
) -> Result<DensityCurve> {
    density_curve_with(
        p,
        mu_c,
        mu_d,
        interval,
        grid_points,
        eta_min,
        alpha,
        NEWTON_TOL,
        DEFAULT_TAU,
    )
}

/// [`polynomial_density`] with explicit solver tolerance and regularity
/// threshold.
#[allow(clippy::too_many_arguments)]
pub fn density_curve_with(
    p: &NCPolynomial,
    mu_c: &ScalarMeasure,
    mu_d: &ScalarMeasure,
    interval: (f64, f64),
    grid_points: usize,
    eta_min: f64,
    alpha: f64,
    tol: f64,
    tau: f64,
) -> Result<DensityCurve> {
    let (a, b) = interval;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Config(format!(
            "density interval must be finite with a < b, got [{a}, {b}]"
        )));
    }
    if grid_points == 0 {
        return Err(Error::Config(
            "density grid needs at least one point".into(),
        ));
    }
    if !(eta_min > 0.0 && eta_min.is_finite()) {
        return Err(Error::Config(format!(
            "eta_min must be positive, got {eta_min}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Config(format!(
            "solver tolerance must be positive, got {tol}"
        )));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!(
            "regularity threshold must be positive, got {tau}"
        )));
    }
    let pencil = linearize_selfadjoint(p)?;
    let schedule = default_eta_schedule(eta_min);
    let x_grid: Vec<f64> = if grid_points == 1 {
        vec![a]
    } else {
        (0..grid_points)
            .map(|i| a + (b - a) * i as f64 / (grid_points - 1) as f64)
            .collect()
    };
    let eta_alpha = eta_min.powf(alpha);

    struct PointResult {
        rho: f64,
        flag: bool,
        residual: f64,
        cond_a: f64,
        cond_b: f64,
    }

    let results: Vec<PointResult> = x_grid
        .par_iter()
        .map(|&x| {
            let z = c64::new(x, eta_alpha);
            let solved = eta_continuation_with(&pencil, mu_c, mu_d, z, &schedule, alpha, tol);
            match solved {
                Ok(res) => {
                    let pair = res.pair;
                    let ksum = &pair.omega1 + &pair.omega2 - &pair.point.beta;
                    match linalg::inv(&ksum.view()) {
                        Ok(g_h) => {
                            let rho = stieltjes_density(g_h[[0, 0]]);
                            let report = regularity_check(
                                &pair,
                                &pencil.gamma1.view(),
                                mu_c,
                                &pencil.gamma2.view(),
                                mu_d,
                                tau,
                            );
                            PointResult {
                                rho,
                                flag: report.pass && pair.converged,
                                residual: pair.residual,
                                cond_a: report.min_sv_cond_a_c.min(report.min_sv_cond_a_d),
                                cond_b: report.min_sv_cond_b,
                            }
                        }
                        Err(_) => PointResult {
                            rho: 0.0,
                            flag: false,
                            residual: f64::INFINITY,
                            cond_a: 0.0,
                            cond_b: 0.0,
                        },
                    }
                }
                Err(_) => PointResult {
                    rho: 0.0,
                    flag: false,
                    residual: f64::INFINITY,
                    cond_a: 0.0,
                    cond_b: 0.0,
                },
            }
        })
        .collect();

    Ok(DensityCurve {
        x_grid,
        rho: results.iter().map(|r| r.rho).collect(),
        eta_final: eta_min,
        regularity_flags: results.iter().map(|r| r.flag).collect(),
        residuals: results.iter().map(|r| r.residual).collect(),
        cond_a_min_sv: results.iter().map(|r| r.cond_a).collect(),
        cond_b_min_sv: results.iter().map(|r| r.cond_b).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    fn scalar(v: c64) -> Array2<c64> {
        Array2::from_elem((1, 1), v)
    }

    fn one() -> Array2<c64> {
        scalar(c(1.0, 0.0))
    }

    /// Scalar point β = z + iη for 1×1 pencils with γ0 = 0.
    fn scalar_point(z: c64, eta: f64) -> SpectralPoint {
        let gamma0 = Array2::<c64>::zeros((1, 1));
        SpectralPoint::new(z, eta, 0.5, &gamma0.view()).unwrap()
    }

    #[test]
    fn h_transform_examples() {
        let gamma = array![[c(0.7, 0.0), c(0.2, 0.1)], [c(0.2, -0.1), c(-0.3, 0.0)]];
        let b = array![[c(0.1, 1.2), c(0.0, 0.0)], [c(0.0, 0.0), c(-0.4, 0.8)]];

        // δ0: G(b) = b^{-1}, so h = 0.
        let d0 = ScalarMeasure::dirac(0.0).unwrap();
        let h = h_transform(&gamma.view(), &d0, &b.view()).unwrap();
        assert!(linalg::fro_norm(&h.view()) < 1e-12);

        // δt: h(b) = −tγ.
        let dt = ScalarMeasure::dirac(0.6).unwrap();
        let h = h_transform(&gamma.view(), &dt, &b.view()).unwrap();
        let expected = gamma.mapv(|g| g * c(-0.6, 0.0));
        assert!(linalg::fro_norm(&(&h - &expected).view()) < 1e-12);

        // Scalar semicircle radius 2 at b = 2i: h = i(√2 − 1).
        let sc = ScalarMeasure::standard_semicircle();
        let h = h_transform(&one().view(), &sc, &scalar(c(0.0, 2.0)).view()).unwrap();
        let expected = c(0.0, 2.0_f64.sqrt() - 1.0);
        assert!((h[[0, 0]] - expected).norm() < 1e-13, "got {}", h[[0, 0]]);
    }

    #[test]
    fn fixed_point_dirac_cases() {
        let sc = ScalarMeasure::standard_semicircle();
        let gamma2 = array![[c(0.4, 0.0), c(0.1, 0.2)], [c(0.1, -0.2), c(-0.5, 0.0)]];
        let gamma1 = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        let gamma0 = Array2::<c64>::zeros((2, 2));
        let beta = SpectralPoint::new(c(0.3, 0.1), 0.4, 0.5, &gamma0.view()).unwrap();

        // μ_d = δ0 forces ω1 = β.
        let d0 = ScalarMeasure::dirac(0.0).unwrap();
        let pair =
            fixed_point_solve(&gamma1.view(), &sc, &gamma2.view(), &d0, &beta, 1e-12, 200).unwrap();
        assert!(pair.converged);
        assert!(linalg::fro_norm(&(&pair.omega1 - &beta.beta).view()) < 1e-12);

        // μ_d = δt forces ω1 = β − tγ2.
        let dt = ScalarMeasure::dirac(0.8).unwrap();
        let pair =
            fixed_point_solve(&gamma1.view(), &sc, &gamma2.view(), &dt, &beta, 1e-12, 200).unwrap();
        let expected = &beta.beta - &gamma2.mapv(|g| g * c(0.8, 0.0));
        assert!(linalg::fro_norm(&(&pair.omega1 - &expected).view()) < 1e-12);
    }

    #[test]
    fn scalar_semicircle_system() {
        // Both standard semicircles at β = 3i: ω1 = ω2 = i(9+√17)/4.
        let sc = ScalarMeasure::standard_semicircle();
        let beta = scalar_point(c(0.0, 3.0), 1e-12);
        // η enters β; use z = 3i directly with negligible η.
        let oracle = c(0.0, (9.0 + 17.0_f64.sqrt()) / 4.0);

        let pair =
            fixed_point_solve(&one().view(), &sc, &one().view(), &sc, &beta, 1e-8, 500).unwrap();
        assert!(pair.converged);
        assert!((pair.omega1[[0, 0]] - oracle).norm() < 1e-6);
        assert!((pair.omega1[[0, 0]] - pair.omega2[[0, 0]]).norm() < 1e-7);

        let (refined, diag) =
            newton_refine(&pair, &one().view(), &sc, &one().view(), &sc, 1e-12).unwrap();
        assert!(refined.converged);
        assert!(refined.residual < 1e-12);
        assert!((refined.omega1[[0, 0]] - oracle).norm() < 1e-10);
        assert!(diag.h0 <= 0.5, "h0 = {}", diag.h0);
    }

    #[test]
    fn newton_zero_step_when_exact() {
        let sc = ScalarMeasure::standard_semicircle();
        let beta = scalar_point(c(0.0, 3.0), 1e-12);
        let exact = c(0.0, (9.0 + 17.0_f64.sqrt()) / 4.0);
        let pair = SubordinationPair {
            omega1: scalar(exact),
            omega2: scalar(exact),
            point: beta,
            residual: 0.0,
            iterations: 0,
            method: SolveMethod::FixedPoint,
            converged: true,
        };
        let (refined, diag) =
            newton_refine(&pair, &one().view(), &sc, &one().view(), &sc, 1e-11).unwrap();
        assert_eq!(refined.iterations, 0);
        assert!(diag.delta0 < 1e-11, "delta0 = {}", diag.delta0);
        assert!((refined.omega1[[0, 0]] - exact).norm() < 1e-14);
    }

    #[test]
    fn newton_quadratic_decay_on_anticommutator() {
        let p: NCPolynomial = "x*y + y*x".parse().unwrap();
        let pencil = linearize_selfadjoint(&p).unwrap();
        let sc = ScalarMeasure::standard_semicircle();
        let point = SpectralPoint::new(c(0.3, 0.1), 0.1, 0.5, &pencil.gamma0.view()).unwrap();
        let pair = fixed_point_solve(
            &pencil.gamma1.view(),
            &sc,
            &pencil.gamma2.view(),
            &sc,
            &point,
            1e-6,
            2000,
        )
        .unwrap();
        assert!(pair.converged);
        let (refined, diag) = newton_refine(
            &pair,
            &pencil.gamma1.view(),
            &sc,
            &pencil.gamma2.view(),
            &sc,
            1e-12,
        )
        .unwrap();
        assert!(refined.converged);
        // Quadratic decay: r_{k+1} ≤ C·r_k² with a sane constant.
        let h = &diag.residual_history;
        assert!(h.len() >= 2);
        for w in h.windows(2) {
            if w[0] > 1e-14 {
                let ratio = w[1] / (w[0] * w[0]);
                assert!(ratio.is_finite() && ratio < 1e4, "C estimate {ratio}");
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let sc = ScalarMeasure::standard_semicircle();
        let arc = ScalarMeasure::arcsine(-1.0, 1.0).unwrap();
        let gamma1 = array![[c(0.8, 0.0), c(0.3, 0.1)], [c(0.3, -0.1), c(-0.2, 0.0)]];
        let gamma2 = array![[c(0.5, 0.0), c(0.0, 0.4)], [c(0.0, -0.4), c(0.9, 0.0)]];
        let beta = array![[c(0.4, 0.9), c(0.1, 0.0)], [c(0.1, 0.0), c(-0.3, 1.1)]];
        let w1 = array![[c(0.5, 1.3), c(0.1, 0.1)], [c(0.1, -0.1), c(-0.2, 1.4)]];
        let w2 = array![[c(-0.1, 1.2), c(0.2, -0.1)], [c(0.2, 0.1), c(0.3, 1.5)]];

        let sys = eval_system(
            &gamma1.view(),
            &sc,
            &gamma2.view(),
            &arc,
            &beta.view(),
            &w1.view(),
            &w2.view(),
        )
        .unwrap();
        let j = assemble_jacobian(&sys);

        // Directional derivative in a handful of fixed directions.
        let dirs = [
            (
                array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]],
                array![[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]],
            ),
            (
                array![[c(0.0, 0.0), c(0.3, 0.2)], [c(0.1, 0.0), c(0.0, 0.0)]],
                array![[c(0.2, 0.0), c(0.0, 0.0)], [c(0.0, 0.1), c(0.0, -0.3)]],
            ),
            (
                array![[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]],
                array![[c(0.0, 0.0), c(0.0, 1.0)], [c(0.0, 0.0), c(0.0, 0.0)]],
            ),
        ];
        let h = 1e-6;
        for (b1, b2) in dirs {
            let plus = eval_system(
                &gamma1.view(),
                &sc,
                &gamma2.view(),
                &arc,
                &beta.view(),
                &(&w1 + &b1.mapv(|v| v * h)).view(),
                &(&w2 + &b2.mapv(|v| v * h)).view(),
            )
            .unwrap();
            let minus = eval_system(
                &gamma1.view(),
                &sc,
                &gamma2.view(),
                &arc,
                &beta.view(),
                &(&w1 - &b1.mapv(|v| v * h)).view(),
                &(&w2 - &b2.mapv(|v| v * h)).view(),
            )
            .unwrap();
            let fd1 = (&plus.f1 - &minus.f1).mapv(|v| v / (2.0 * h));
            let fd2 = (&plus.f2 - &minus.f2).mapv(|v| v / (2.0 * h));

            let mut dir = Array1::<c64>::zeros(8);
            dir.slice_mut(s![..4]).assign(&vec_col(&b1.view()));
            dir.slice_mut(s![4..]).assign(&vec_col(&b2.view()));
            let jd = j.dot(&dir);
            let an1 = unvec_col(&jd.as_slice().unwrap()[..4], 2);
            let an2 = unvec_col(&jd.as_slice().unwrap()[4..], 2);

            let num =
                linalg::fro_norm(&(&fd1 - &an1).view()) + linalg::fro_norm(&(&fd2 - &an2).view());
            let den = linalg::fro_norm(&an1.view()) + linalg::fro_norm(&an2.view()) + 1e-12;
            assert!(num / den < 1e-6, "relative derivative error {}", num / den);
        }
    }

    #[test]
    fn half_plane_preservation_and_consistency() {
        let sc = ScalarMeasure::standard_semicircle();
        let bern = ScalarMeasure::symmetric_bernoulli();
        let beta = scalar_point(c(0.5, 0.01), 0.1);
        let (pair, _) =
            hybrid_solve(&one().view(), &sc, &one().view(), &bern, &beta, 1e-11, None).unwrap();
        assert!(pair.converged);
        let tol = 1e-9;
        let min_beta = linalg::min_eig_hermitian(&linalg::imag_part(&beta.beta.view()).view());
        for omega in [&pair.omega1, &pair.omega2] {
            let min_omega = linalg::min_eig_hermitian(&linalg::imag_part(&omega.view()).view());
            assert!(min_omega >= min_beta - tol);
        }
        let gc = matrix_cauchy(&one().view(), &sc, &pair.omega1.view()).unwrap();
        let gd = matrix_cauchy(&one().view(), &bern, &pair.omega2.view()).unwrap();
        assert!(linalg::fro_norm(&(&gc - &gd).view()) <= 2e-11);
    }

    #[test]
    fn eta_continuation_density_limit() {
        // Free sum of two standard semicircles: semicircle of radius 2√2,
        // density at 0 equal to √2/(2π).
        let sc = ScalarMeasure::standard_semicircle();
        let p: NCPolynomial = "x + y".parse().unwrap();
        let pencil = linearize_selfadjoint(&p).unwrap();
        let schedule = default_eta_schedule(1e-6);
        let res = eta_continuation(&pencil, &sc, &sc, c(0.0, 1e-3), &schedule, 0.5).unwrap();
        let k = (&res.pair.omega1 + &res.pair.omega2 - &res.pair.point.beta)[[0, 0]];
        let g = 1.0 / k;
        let rho = -g.im / PI;
        let expected = 2.0_f64.sqrt() / (2.0 * PI);
        assert!(
            (rho - expected).abs() < 5e-4,
            "rho = {rho}, expected {expected}"
        );
        assert_eq!(res.trail.len(), schedule.len());
        assert!(res.trail.iter().all(|s| s.residual < 1e-10));
    }

    #[test]
    fn warm_start_beats_cold_start() {
        let sc = ScalarMeasure::standard_semicircle();
        let p: NCPolynomial = "x + y".parse().unwrap();
        let pencil = linearize_selfadjoint(&p).unwrap();
        let schedule = default_eta_schedule(1e-5);
        let res = eta_continuation(&pencil, &sc, &sc, c(0.0, 0.0), &schedule, 0.5).unwrap();
        let warm_iters = res.trail.last().unwrap().iterations;

        let point = SpectralPoint::new(c(0.0, 0.0), 1e-5, 0.5, &pencil.gamma0.view()).unwrap();
        let (cold, _) = hybrid_solve(
            &pencil.gamma1.view(),
            &sc,
            &pencil.gamma2.view(),
            &sc,
            &point,
            NEWTON_TOL,
            None,
        )
        .unwrap();
        assert!(
            warm_iters < cold.iterations,
            "warm {warm_iters} vs cold {}",
            cold.iterations
        );
    }

    #[test]
    fn eta_continuation_validates_schedule() {
        let sc = ScalarMeasure::standard_semicircle();
        let p: NCPolynomial = "x + y".parse().unwrap();
        let pencil = linearize_selfadjoint(&p).unwrap();
        assert!(eta_continuation(&pencil, &sc, &sc, c(0.0, 0.0), &[], 0.5).is_err());
        assert!(eta_continuation(&pencil, &sc, &sc, c(0.0, 0.0), &[0.5, 0.5], 0.5).is_err());
        assert!(eta_continuation(&pencil, &sc, &sc, c(0.0, 0.0), &[1.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn fixed_point_flags_non_convergence() {
        let sc = ScalarMeasure::standard_semicircle();
        let beta = scalar_point(c(0.0, 0.001), 1e-6);
        let pair =
            fixed_point_solve(&one().view(), &sc, &one().view(), &sc, &beta, 1e-14, 2).unwrap();
        assert!(!pair.converged);
        assert_eq!(pair.iterations, 2);
        assert!(pair.residual.is_finite());
    }

    #[test]
    fn regularity_reports() {
        // μ_d = δ0, β = i (scalar): ω1 = β = i, singular values ≥ ℑβ = 1.
        let sc = ScalarMeasure::standard_semicircle();
        let d0 = ScalarMeasure::dirac(0.0).unwrap();
        let beta = scalar_point(c(0.0, 0.5), 0.5);
        let pair =
            fixed_point_solve(&one().view(), &sc, &one().view(), &d0, &beta, 1e-12, 200).unwrap();
        let report = regularity_check(&pair, &one().view(), &sc, &one().view(), &d0, 1e-3);
        assert!(report.min_sv_cond_a_c >= 1.0 - 1e-9);
        assert!(report.pass);

        // Semicircle ⊞ semicircle at the bulk center, tiny η: regular.
        let p: NCPolynomial = "x + y".parse().unwrap();
        let pencil = linearize_selfadjoint(&p).unwrap();
        let schedule = default_eta_schedule(1e-5);
        let res = eta_continuation(&pencil, &sc, &sc, c(0.0, 0.0), &schedule, 0.5).unwrap();
        let report = regularity_check(
            &res.pair,
            &pencil.gamma1.view(),
            &sc,
            &pencil.gamma2.view(),
            &sc,
            1e-3,
        );
        assert!(report.pass, "{report:?}");

        // Outside the support edge 2√2: condition A still healthy.
        let x_out = 2.0 * 2.0_f64.sqrt() + 0.5;
        let res = eta_continuation(&pencil, &sc, &sc, c(x_out, 0.0), &schedule, 0.5).unwrap();
        let report = regularity_check(
            &res.pair,
            &pencil.gamma1.view(),
            &sc,
            &pencil.gamma2.view(),
            &sc,
            1e-3,
        );
        assert!(report.min_sv_cond_a_c >= 1e-3 && report.min_sv_cond_a_d >= 1e-3);
    }

    #[test]
    fn density_single_variable_semicircle() {
        // P = X1 ignores μ_d: the density is the semicircle itself.
        let p: NCPolynomial = "x".parse().unwrap();
        let sc = ScalarMeasure::standard_semicircle();
        let curve = polynomial_density(&p, &sc, &sc, (-1.5, 1.5), 7, 1e-6, 0.5).unwrap();
        for (x, rho) in curve.x_grid.iter().zip(curve.rho.iter()) {
            let expected = (4.0 - x * x).sqrt() / (2.0 * PI);
            assert!(
                (rho - expected).abs() < 2e-3,
                "x = {x}: {rho} vs {expected}"
            );
        }
        assert!(curve.regularity_flags.iter().all(|&f| f));
        assert!(curve.residuals.iter().all(|&r| r < 1e-10));
    }

    #[test]
    fn density_free_sum_of_bernoullis_is_arcsine() {
        let p: NCPolynomial = "x + y".parse().unwrap();
        let bern = ScalarMeasure::symmetric_bernoulli();
        let curve = polynomial_density(&p, &bern, &bern, (-1.0, 1.0), 5, 1e-6, 0.5).unwrap();
        for (x, rho) in curve.x_grid.iter().zip(curve.rho.iter()) {
            let expected = 1.0 / (PI * (4.0 - x * x).sqrt());
            assert!(
                (rho - expected).abs() < 2e-3,
                "x = {x}: {rho} vs {expected}"
            );
        }
    }
}
