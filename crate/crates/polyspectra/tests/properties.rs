//! Property-based tests for the algebraic layers: polynomial text round
//! trips, evaluation homomorphisms, pencil invariants, and transform
//! analyticity.

use ndarray::prelude::*;
use ndarray_linalg::types::c64;
use num_complex::Complex64;
use polyspectra::linalg;
use polyspectra::linearize::{linearize_selfadjoint, schur_check};
use polyspectra::ncpoly::{NCPolynomial, Word};
use polyspectra::spectra::{matrix_cauchy, ScalarMeasure};
use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_hermitian(n: usize, seed: u64) -> Array2<c64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_fn((n, n), |_| {
        c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    linalg::hermitian_part(&a.view())
}

/// Hermitian-part-positive matrix point `b = H + i(Q + ηI)` with `Q ⪰ 0`.
fn upper_half_plane_point(n: usize, seed: u64, eta: f64) -> Array2<c64> {
    let h = random_hermitian(n, seed);
    let s = random_hermitian(n, seed.wrapping_add(1));
    let q = s.dot(&s); // positive semidefinite
    let mut b = h.mapv(|z| z);
    let i = c64::new(0.0, 1.0);
    b = &b + &q.mapv(|z| z * i);
    for k in 0..n {
        b[[k, k]] += i * eta;
    }
    b
}

/// Quarter-integer coefficients print without exponents and parse exactly.
fn coeff_strategy() -> impl Strategy<Value = Complex64> {
    ((-12i32..=12), (-12i32..=12))
        .prop_map(|(re, im)| Complex64::new(re as f64 / 4.0, im as f64 / 4.0))
}

fn word_strategy(max_len: usize) -> impl Strategy<Value = Word> {
    proptest::collection::vec(1u8..=2, 0..=max_len).prop_map(|ls| Word::new(&ls).unwrap())
}

fn poly_strategy(max_len: usize, max_terms: usize) -> impl Strategy<Value = NCPolynomial> {
    proptest::collection::vec((word_strategy(max_len), coeff_strategy()), 0..=max_terms)
        .prop_map(NCPolynomial::from_terms)
}

/// Self-adjoint with the same degree bound: `p + p*` plus a real constant.
fn selfadjoint_strategy(max_len: usize) -> impl Strategy<Value = NCPolynomial> {
    (poly_strategy(max_len, 4), -8i32..=8).prop_map(|(p, k)| {
        let mut q = p.adjoint();
        for (w, &c) in p.terms() {
            q.add_term(w.clone(), c);
        }
        q.add_term(Word::empty(), Complex64::new(k as f64 / 2.0, 0.0));
        q
    })
}

fn measure_strategy() -> impl Strategy<Value = ScalarMeasure> {
    prop_oneof![
        (-1.0..1.0f64, 0.3..2.0f64).prop_map(|(c, r)| ScalarMeasure::semicircle(c, r).unwrap()),
        (-2.0..0.5f64, 0.2..2.0f64).prop_map(|(a, w)| ScalarMeasure::arcsine(a, a + w).unwrap()),
        (-2.0..0.5f64, 0.2..2.0f64).prop_map(|(a, w)| ScalarMeasure::uniform(a, a + w).unwrap()),
        Just(ScalarMeasure::symmetric_bernoulli()),
        proptest::collection::vec(0.05..1.0f64, 1..=4).prop_map(|ws| {
            let total: f64 = ws.iter().sum();
            let pts = ws
                .iter()
                .enumerate()
                .map(|(i, &w)| (i as f64 * 0.75 - 1.5, w / total))
                .collect();
            ScalarMeasure::atoms(pts).unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_polynomials_parse_back(p in poly_strategy(4, 6)) {
        let text = p.to_string();
        let back: NCPolynomial = text.parse().unwrap();
        prop_assert_eq!(back, p, "text was {}", text);
    }

    #[test]
    fn word_evaluation_is_multiplicative(
        w1 in word_strategy(3),
        w2 in word_strategy(3),
        seed in 0u64..1_000,
    ) {
        let s1 = random_hermitian(4, seed);
        let s2 = random_hermitian(4, seed.wrapping_add(7));
        let p1 = NCPolynomial::monomial(w1.clone(), Complex64::new(1.0, 0.0));
        let p2 = NCPolynomial::monomial(w2.clone(), Complex64::new(1.0, 0.0));
        let p12 = NCPolynomial::monomial(w1.concat(&w2), Complex64::new(1.0, 0.0));
        let a = p1.evaluate(&s1.view(), &s2.view()).unwrap();
        let b = p2.evaluate(&s1.view(), &s2.view()).unwrap();
        let ab = p12.evaluate(&s1.view(), &s2.view()).unwrap();
        let diff = &a.dot(&b) - &ab;
        let scale = 1.0 + linalg::fro_norm(&ab.view());
        prop_assert!(linalg::fro_norm(&diff.view()) / scale < 1e-12);
    }

    #[test]
    fn adjoint_is_an_involution_and_matches_dagger(
        p in poly_strategy(4, 6),
        seed in 0u64..1_000,
    ) {
        prop_assert_eq!(p.adjoint().adjoint(), p.clone());
        let s1 = random_hermitian(3, seed);
        let s2 = random_hermitian(3, seed.wrapping_add(3));
        let direct = p.adjoint().evaluate(&s1.view(), &s2.view()).unwrap();
        let daggered = linalg::dagger(&p.evaluate(&s1.view(), &s2.view()).unwrap().view());
        let diff = &direct - &daggered;
        prop_assert!(linalg::fro_norm(&diff.view()) < 1e-10);
    }

    #[test]
    fn pencils_are_hermitian_and_pass_schur_checks(
        p in selfadjoint_strategy(4),
        seed in 0u64..1_000,
        re in -2.0..2.0f64,
        im in 0.5..2.5f64,
    ) {
        prop_assume!(p.degree() >= 1);
        let pencil = linearize_selfadjoint(&p).unwrap();
        prop_assert!(pencil.hermiticity_deviation() < 1e-14);
        let s1 = random_hermitian(3, seed);
        let s2 = random_hermitian(3, seed.wrapping_add(11));
        let z = c64::new(re, im);
        let residual = schur_check(&p, &pencil, &s1.view(), &s2.view(), z).unwrap();
        prop_assert!(residual < 1e-8, "schur residual {} for {}", residual, p);
    }

    #[test]
    fn scalar_cauchy_maps_to_the_lower_half_plane(
        mu in measure_strategy(),
        re in -5.0..5.0f64,
        im in 0.1..3.0f64,
    ) {
        let z = c64::new(re, im);
        let g = mu.cauchy(z).unwrap();
        prop_assert!(g.im < 0.0, "Im G = {} at z = {}", g.im, z);
        // Symmetry under conjugation.
        let gc = mu.cauchy(z.conj()).unwrap();
        prop_assert!((gc - g.conj()).norm() < 1e-12);
        // Decay normalization: z·G(z) → 1 along the imaginary axis.
        let far = c64::new(0.0, 1e6);
        let gf = mu.cauchy(far).unwrap();
        prop_assert!((far * gf - 1.0).norm() < 1e-4);
    }

    #[test]
    fn quadrature_integrates_the_resolvent_kernel(
        mu in measure_strategy(),
        re in -4.0..4.0f64,
        im in 0.5..2.0f64,
    ) {
        let z = c64::new(re, im);
        let weight: f64 = mu.quad_nodes().iter().map(|&(_, w)| w).sum();
        prop_assert!((weight - 1.0).abs() < 1e-10, "weights sum to {}", weight);
        let direct: c64 = mu
            .quad_nodes()
            .iter()
            .map(|&(t, w)| c64::new(w, 0.0) / (z - t))
            .sum();
        let closed = mu.cauchy(z).unwrap();
        prop_assert!(
            (direct - closed).norm() < 1e-6,
            "quadrature {} vs closed form {}",
            direct,
            closed
        );
    }

    #[test]
    fn matrix_cauchy_is_herglotz(
        mu in measure_strategy(),
        seed in 0u64..1_000,
        eta in 0.2..2.0f64,
    ) {
        let n = 3;
        let gamma = random_hermitian(n, seed.wrapping_add(17));
        let b = upper_half_plane_point(n, seed, eta);
        let g = matrix_cauchy(&gamma.view(), &mu, &b.view()).unwrap();
        let neg_imag = linalg::imag_part(&g.view()).mapv(|v| -v);
        let min_eig = linalg::min_eig_hermitian(&neg_imag.view());
        prop_assert!(min_eig > 0.0, "Im G not negative definite: {}", -min_eig);
    }

    #[test]
    fn levy_distance_is_a_symmetric_premetric(
        mu in measure_strategy(),
        nu in measure_strategy(),
    ) {
        let d = polyspectra::spectra::levy_distance(&mu, &nu);
        let d_rev = polyspectra::spectra::levy_distance(&nu, &mu);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - d_rev).abs() < 1e-12);
        let self_d = polyspectra::spectra::levy_distance(&mu, &mu);
        prop_assert!(self_d < 1e-9, "d(mu, mu) = {}", self_d);
    }
}
