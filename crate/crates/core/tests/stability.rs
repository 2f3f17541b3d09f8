mod common;

use common::*;
use lpvgen::stability::*;
use lpvgen::system::spectral_norm;
use lpvgen::{Error, LpvSystem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn zero_system(n: usize, n_p: usize) -> LpvSystem<f64> {
    LpvSystem::zeros(n, 1, n_p)
}

#[test]
fn lmi_all_zero_is_lambda_q() {
    let sys = zero_system(3, 1);
    let s = lmi_matrix(&sys, &DMatrix::identity(3, 3), 1.0).unwrap();
    assert_eq!(s, DMatrix::identity(3, 3));
    assert_eq!(check_stability(&sys, &DMatrix::identity(3, 3), 1.0).unwrap(), 1.0);
}

#[test]
fn lmi_scalar_example() {
    let sys = scalar_example();
    for q in [0.1, 1.0, 4.0 / 11.0, 2.0] {
        let s = lmi_matrix(&sys, &scalar(q), 1.0).unwrap();
        assert!((s[(0, 0)] - (-2.75 * q + 1.0)).abs() < 1e-14);
    }
    assert!((check_stability(&sys, &scalar(1.0), 1.0).unwrap() + 1.75).abs() < 1e-14);
}

#[test]
fn lmi_identity_q_leaves_symmetric_part() {
    let mut sys = zero_system(2, 1);
    let a0 = mat(&[&[-1.0, 2.0], &[0.5, -3.0]]);
    sys.set_a(0, a0.clone()).unwrap();
    let s = lmi_matrix(&sys, &DMatrix::identity(2, 2), 1.5).unwrap();
    let expect = &a0 + a0.transpose() + DMatrix::identity(2, 2) * 1.5;
    assert!((s - expect).amax() < 1e-14);
}

#[test]
fn margin_diagonal_example() {
    let mut sys = zero_system(2, 2);
    sys.set_a(0, DMatrix::identity(2, 2) * -5.0).unwrap();
    sys.set_c(0, mat(&[&[1.0, 0.0]])).unwrap();
    let m = check_stability(&sys, &DMatrix::identity(2, 2), 2.0).unwrap();
    assert!((m + 7.0).abs() < 1e-12);
}

#[test]
fn check_stability_rejects_bad_inputs() {
    let sys = scalar_example();
    assert!(matches!(check_stability(&sys, &scalar(-1.0), 1.0), Err(Error::NotPositiveDefinite { .. })));
    assert!(check_stability(&sys, &scalar(1.0), 0.5).is_err());
    assert!(matches!(lmi_matrix(&sys, &DMatrix::identity(2, 2), 1.0), Err(Error::Dimension(_))));
}

#[test]
fn lyapunov_scalar() {
    let sol = solve_generalized_lyapunov(&scalar_example(), 1.0).unwrap();
    assert!((sol.q[(0, 0)] - 4.0 / 11.0).abs() < 1e-14);
    assert!(sol.positive_definite);
    assert!(sol.residual <= 1e-15);
}

#[test]
fn lyapunov_zero_output_flags_not_pd() {
    let mut sys = scalar_example();
    sys.set_c(0, scalar(0.0)).unwrap();
    let sol = solve_generalized_lyapunov(&sys, 1.0).unwrap();
    assert_eq!(sol.q, scalar(0.0));
    assert!(!sol.positive_definite);
    assert!(matches!(certify(&sys, 1.0), Err(Error::NotPositiveDefinite { .. })));
}

#[test]
fn lyapunov_diagonal_hand_expanded() {
    let mut sys = zero_system(2, 1);
    sys.set_a(0, DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, -3.0]))).unwrap();
    sys.set_c(0, mat(&[&[1.0, 1.0]])).unwrap();
    let q = solve_generalized_lyapunov(&sys, 1.0).unwrap().q;
    // (a_i + a_j + lambda) q_ij = -1 for every entry since C'C is all ones
    let eqs = [
        (-4.0 + 1.0) * q[(0, 0)] + 1.0,
        (-5.0 + 1.0) * q[(0, 1)] + 1.0,
        (-5.0 + 1.0) * q[(1, 0)] + 1.0,
        (-6.0 + 1.0) * q[(1, 1)] + 1.0,
    ];
    assert!(eqs.iter().all(|e| e.abs() <= 1e-10), "{eqs:?}");
    assert!((q[(0, 1)] - 0.25).abs() < 1e-14);
}

#[test]
fn lyapunov_singular_operator() {
    // A0 = -lambda/2 makes the operator zero
    let sys = scalar_lti(-0.5, 1.0, 1.0);
    assert!(matches!(solve_generalized_lyapunov(&sys, 1.0), Err(Error::SingularOperator { .. })));
}

#[test]
fn lyapunov_indefinite_solution_is_error() {
    // unstable: q = -1/(2a + lambda) < 0
    let sys = scalar_lti(1.0, 1.0, 1.0);
    assert!(matches!(solve_generalized_lyapunov(&sys, 1.0), Err(Error::NotPositiveDefinite { .. })));
}

#[test]
fn h2_examples() {
    let sys = scalar_example();
    let q = solve_generalized_lyapunov(&sys, 1.0).unwrap().q;
    assert!((h2_norm_sq(&sys, &q).unwrap() - 4.0 / 11.0).abs() < 1e-14);
    let mut no_b = sys.clone();
    no_b.set_b(0, scalar(0.0)).unwrap();
    assert_eq!(h2_norm_sq(&no_b, &q).unwrap(), 0.0);
    let doubled = LpvSystem::new(
        sys.a().to_vec(),
        sys.b().iter().map(|b| DMatrix::from_fn(1, 2, |_, _| b[(0, 0)])).collect(),
        sys.c().to_vec(),
        sys.bias().to_vec(),
    )
    .unwrap();
    assert!((h2_norm_sq(&doubled, &q).unwrap() - 8.0 / 11.0).abs() < 1e-14);
}

#[test]
fn certificate_is_strict_and_close_to_equality() {
    let cert = certify(&scalar_example(), 1.0).unwrap();
    assert!(cert.margin < 0.0);
    assert!((cert.h2_sq - 4.0 / 11.0).abs() < 1e-8);
    assert!(cert.h2_sq >= 4.0 / 11.0);
}

/// Integrates `Q' = A'Q + QA + C'C` to steady state with RK4.
fn lyapunov_by_integration(a: &DMatrix<f64>, cc: &DMatrix<f64>) -> DMatrix<f64> {
    let f = |q: &DMatrix<f64>| a.transpose() * q + q * a + cc;
    let mut q = DMatrix::zeros(a.nrows(), a.nrows());
    let h = 0.005;
    for _ in 0..20_000 {
        let k1 = f(&q);
        let k2 = f(&(&q + &k1 * (h / 2.0)));
        let k3 = f(&(&q + &k2 * (h / 2.0)));
        let k4 = f(&(&q + &k3 * h));
        q += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    q
}

#[test]
fn no_scheduling_reduces_to_shifted_lti() {
    let mut r = rng(21);
    for _ in 0..5 {
        let lambda = 0.7;
        let (sys, _) = random_certified(&mut r, 3, 2, 0, lambda);
        let shifted = &sys.a()[0] + DMatrix::identity(3, 3) * (lambda / 2.0);
        let cc = sys.c()[0].transpose() * &sys.c()[0];
        let q_ref = lyapunov_by_integration(&shifted, &cc);
        let b = &sys.b()[0];
        let h2_ref = (b.transpose() * q_ref * b).trace();
        let q = solve_generalized_lyapunov(&sys, lambda).unwrap().q;
        let h2 = h2_norm_sq(&sys, &q).unwrap();
        assert!((h2 - h2_ref).abs() < 1e-8 * h2_ref.max(1.0), "{h2} vs {h2_ref}");
    }
}

#[test]
fn spectral_decay_examples() {
    let mut sys = zero_system(3, 1);
    sys.set_a(0, DMatrix::identity(3, 3) * -2.0).unwrap();
    let mut a1 = DMatrix::zeros(3, 3);
    a1[(0, 1)] = 1.0;
    sys.set_a(1, a1).unwrap();
    let cert = check_spectral_decay(&sys).unwrap();
    assert!((cert.gamma - 4.0).abs() < 1e-12 && (cert.big_gamma - 1.0).abs() < 1e-12);

    let zero = zero_system(2, 1);
    assert!(matches!(check_spectral_decay(&zero), Err(Error::Assumption(_))));

    let mut two = zero_system(2, 2);
    two.set_a(0, DMatrix::identity(2, 2) * -3.0).unwrap();
    two.set_a(1, mat(&[&[1.0, 0.0], &[0.0, 0.0]])).unwrap();
    two.set_a(2, mat(&[&[0.0, 0.6], &[0.8, 0.0]])).unwrap();
    let cert = check_spectral_decay(&two).unwrap();
    assert!((cert.gamma - 6.0).abs() < 1e-12 && (cert.big_gamma - 2.0).abs() < 1e-12);

    let mut weak = zero_system(1, 1);
    weak.set_a(0, scalar(-0.6)).unwrap();
    weak.set_a(1, scalar(0.5)).unwrap();
    assert!(matches!(check_spectral_decay(&weak), Err(Error::Assumption(_))));
}

#[test]
fn k_omega_examples() {
    let cert = SpectralDecayCert::<f64> { gamma: 4.0, big_gamma: 1.0, mu2: -2.0 };
    let v = k_omega_sq(&cert, 2.0, 1.0, 1.0, 1, KOmegaVariant::Printed).unwrap();
    assert!((v - 10.0 / 3.0).abs() < 1e-14);
    let v2 = k_omega_sq(&cert, 2.0, 2.0, 1.0, 1, KOmegaVariant::Printed).unwrap();
    assert!((v2 - 4.0 * v).abs() < 1e-12);
    let lo = k_omega_sq(&cert, 1.0, 1.0, 1.0, 1, KOmegaVariant::Printed).unwrap();
    assert!((lo - 5.0).abs() < 1e-14);
    // 4 (1 + 1/2)
    let corr = k_omega_sq(&cert, 1.0, 1.0, 1.0, 1, KOmegaVariant::Corrected).unwrap();
    assert!((corr - 6.0).abs() < 1e-14);
    assert!(k_omega_sq(&cert, 0.5, 1.0, 1.0, 1, KOmegaVariant::Printed).is_err());
    assert!(k_omega_sq(&cert, 3.5, 1.0, 1.0, 1, KOmegaVariant::Printed).is_err());
}

#[test]
fn certificate_json_round_trip() {
    let cert = certify(&scalar_example(), 1.0).unwrap();
    let text = serde_json::to_string(&cert).unwrap();
    assert!(text.contains("\"Q\""));
    let back: StabilityCertificate<f64> = serde_json::from_str(&text).unwrap();
    assert_eq!(cert, back);
}

#[test]
fn f32_certificate() {
    let sys: LpvSystem<f32> = LpvSystem::new(
        vec![DMatrix::from_element(1, 1, -2.0f32), DMatrix::from_element(1, 1, 0.5)],
        vec![DMatrix::from_element(1, 1, 1.0f32), DMatrix::zeros(1, 1)],
        vec![DMatrix::from_element(1, 1, 1.0f32), DMatrix::zeros(1, 1)],
        vec![DVector::zeros(1); 2],
    )
    .unwrap();
    let cert = certify(&sys, 1.0f32).unwrap();
    assert!((cert.h2_sq - 4.0 / 11.0).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn output_scaling_is_quadratic(seed in any::<u64>(), alpha in 0.1..3.0f64) {
        let mut r = rng(seed);
        let lambda = 1.0;
        let (sys, _) = random_certified(&mut r, 3, 1, 1, lambda);
        let h = |s: &LpvSystem<f64>| {
            let q = solve_generalized_lyapunov(s, lambda).unwrap().q;
            h2_norm_sq(s, &q).unwrap()
        };
        let base = h(&sys);
        let scaled = h(&sys.scale_output(alpha));
        prop_assert!((scaled - alpha * alpha * base).abs() <= 1e-10 * scaled.max(1.0));
    }

    #[test]
    fn certified_systems_have_finite_nonnegative_h2(seed in any::<u64>(), n_x in 1usize..5, n_p in 0usize..3) {
        let mut r = rng(seed);
        let lambda = (n_p as f64).max(0.5);
        let (sys, cert) = random_certified(&mut r, n_x, 2, n_p, lambda);
        prop_assert!(cert.margin < 0.0);
        prop_assert!(cert.h2_sq.is_finite() && cert.h2_sq >= 0.0);
        prop_assert!(lyapunov_residual(&sys, &solve_generalized_lyapunov(&sys, lambda).unwrap().q, lambda) <= 1e-10);
        prop_assert!(spectral_norm(&cert.q) > 0.0);
    }
}
