mod common;

use common::legendre;
use pointnet_kan::autodiff::relative_error;
use pointnet_kan::jacobi::{JacobiParams, SpecialCase};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generalized binomial coefficient `C(a, k)` for real `a`.
fn binom(a: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (a - i as f64) / (i as f64 + 1.0))
}

/// Explicit-sum form of the Jacobi polynomial, independent of the
/// three-term recursion.
fn jacobi_explicit(n: usize, a: f64, b: f64, x: f64) -> f64 {
    (0..=n)
        .map(|s| {
            binom(n as f64 + a, n - s) * binom(n as f64 + b, s) * ((x - 1.0) / 2.0).powi(s as i32)
                * ((x + 1.0) / 2.0).powi((n - s) as i32)
        })
        .sum()
}

#[test]
fn legendre_matches_closed_form() {
    let p = JacobiParams::special(SpecialCase::Legendre, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let g: f64 = rng.random_range(-1.0..=1.0);
        let v = p.eval_basis(g);
        for (k, &value) in v.values.iter().enumerate() {
            let want = legendre(k, g);
            // Relative to the family's sup norm on [-1, 1], which is 1.
            assert!((value - want).abs() <= 1e-12 * want.abs().max(1.0), "P{k}({g}) = {value}, want {want}");
        }
    }
}

#[test]
fn chebyshev_first_kind_is_cosine() {
    let p = JacobiParams::special(SpecialCase::ChebyshevFirst, 6).unwrap();
    let at_one = p.eval_basis(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let v = p.eval_basis(theta.cos());
        for k in 0..=6 {
            let got = v.values[k] / at_one.values[k];
            assert!((got - (k as f64 * theta).cos()).abs() < 1e-10, "k={k} theta={theta}");
        }
    }
}

#[test]
fn spec_examples() {
    let cheb = JacobiParams::special(SpecialCase::ChebyshevFirst, 2).unwrap();
    assert_eq!(cheb.recursion_coeffs(2), (1.5, 0.0, -0.375));
    assert!((cheb.eval_basis(1.0).values[2] - 0.375).abs() < 1e-15);
    let leg = JacobiParams::new(0.0, 0.0, 2).unwrap();
    assert_eq!(leg.recursion_coeffs(2), (1.5, 0.0, -0.5));
    assert!((leg.eval_basis(0.6).values[2] - 0.04).abs() < 1e-15);
    assert!((leg.eval_basis_derivative(0.6)[2] - 1.8).abs() < 1e-14);
    assert_eq!(JacobiParams::special(SpecialCase::Gegenbauer(1.0), 3).unwrap(), JacobiParams::new(1.0, 1.0, 3).unwrap());
    assert!(JacobiParams::special(SpecialCase::Gegenbauer(-1.0), 3).is_err());
}

fn params() -> impl Strategy<Value = JacobiParams> {
    (-0.9f64..3.0, -0.9f64..3.0, 0usize..=8).prop_filter_map("valid", |(a, b, n)| JacobiParams::new(a, b, n).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn recursion_matches_explicit_sum(p in params(), g in -1.0f64..=1.0) {
        let v = p.eval_basis(g);
        prop_assert_eq!(v.values[0], 1.0);
        for (k, &value) in v.values.iter().enumerate() {
            let want = jacobi_explicit(k, p.alpha(), p.beta(), g);
            let scale = jacobi_explicit(k, p.alpha(), p.beta(), 1.0).abs()
                .max(jacobi_explicit(k, p.alpha(), p.beta(), -1.0).abs())
                .max(1.0);
            prop_assert!((value - want).abs() <= 1e-11 * scale, "k={} got {} want {}", k, value, want);
        }
    }

    #[test]
    fn derivative_matches_finite_differences(p in params(), g in -0.99f64..=0.99) {
        let h = 1e-6;
        let d = p.eval_basis_derivative(g);
        prop_assert_eq!(d[0], 0.0);
        let up = p.eval_basis(g + h);
        let down = p.eval_basis(g - h);
        for k in 1..=p.degree() {
            let fd = (up.values[k] - down.values[k]) / (2.0 * h);
            // Central differences carry round-off of order eps·|f|/h.
            let noise = 1e-16 * up.values[k].abs().max(1.0) / h;
            prop_assert!(
                relative_error(d[k], fd) < 1e-6 || (d[k] - fd).abs() < 10.0 * noise,
                "k={} analytic {} fd {}", k, d[k], fd
            );
        }
    }

    #[test]
    fn symmetric_parameters_have_zero_b(a in -0.9f64..4.0, n in 2usize..12) {
        let p = JacobiParams::new(a, a, n).unwrap();
        for k in 2..=n {
            prop_assert_eq!(p.recursion_coeffs(k).1, 0.0);
        }
    }

    #[test]
    fn invalid_parameters_are_rejected(a in -5.0f64..=-1.0, b in -0.5f64..1.0) {
        prop_assert!(JacobiParams::new(a, b, 3).is_err());
        prop_assert!(JacobiParams::new(b, a, 3).is_err());
    }
}
