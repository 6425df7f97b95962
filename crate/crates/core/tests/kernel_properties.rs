//! Kernel identities checked against independent quadrature and on random
//! arguments.

use ohmic_core::quadrature::adaptive_gk;
use ohmic_core::{Nonlinearity, TailForm};
use proptest::prelude::*;

fn builtins() -> Vec<Nonlinearity> {
    vec![
        Nonlinearity::exponential(),
        Nonlinearity::algebraic(0.5).unwrap(),
        Nonlinearity::algebraic(1.0).unwrap(),
        Nonlinearity::algebraic(3.0).unwrap(),
    ]
}

#[test]
fn tail_differences_match_direct_quadrature() {
    for nl in builtins() {
        for (s, t) in [
            (0.0, 0.5),
            (0.0, 100.0),
            (1.0, 7.5),
            (20.0, 21.0),
            (3.0, 90.0),
        ] {
            let direct = adaptive_gk(|x| nl.eval_f(x).unwrap(), s, t, 1e-14, 1e-13).unwrap();
            let diff = nl.eval_big_f(s).unwrap() - nl.eval_big_f(t).unwrap();
            assert!(
                (diff - direct).abs() <= 1e-10,
                "{} on [{s}, {t}]: {diff} vs {direct}",
                nl.name()
            );
        }
    }
}

#[test]
fn s_times_f_decreases_toward_zero() {
    for nl in builtins() {
        let a = 1e3 * nl.eval_f(1e3).unwrap();
        let b = 1e6 * nl.eval_f(1e6).unwrap();
        // e^{-s} underflows to zero at both points.
        assert!(b <= a, "{}: {a} then {b}", nl.name());
        assert!(b < 1e-2, "{}: {b}", nl.name());
    }
}

#[test]
fn tabulated_kernel_reproduces_its_samples() {
    let samples: Vec<(f64, f64)> = (0..=400)
        .map(|i| {
            let s = i as f64 * 0.05;
            (s, (-s).exp())
        })
        .collect();
    let nl = Nonlinearity::tabulated(&samples, Some(TailForm::Exponential { rate: 1.0 })).unwrap();
    for &(s, f) in &samples {
        assert!((nl.eval_f(s).unwrap() - f).abs() < 1e-14);
    }
    // Hermite interpolation of e^{-s} at spacing 0.05.
    for s in [0.025, 1.3333, 7.71, 19.97] {
        assert!(
            (nl.eval_f(s).unwrap() - (-s).exp()).abs() < 1e-5,
            "s = {s}"
        );
        assert!(
            (nl.eval_big_f(s).unwrap() - (-s).exp()).abs() < 1e-5,
            "s = {s}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mean_value_sandwich(which in 0usize..4, m in 1e-4f64..200.0, frac in 0.0f64..1.0) {
        let nl = &builtins()[which];
        let s = m * frac;
        let diff = nl.eval_big_f(s).unwrap() - nl.eval_big_f(m).unwrap();
        let lo = (m - s) * nl.eval_f(m).unwrap();
        let hi = (m - s) * nl.eval_f(s).unwrap();
        let slack = 1e-12 * (1.0 + hi);
        prop_assert!(diff >= lo - slack, "{diff} < {lo}");
        prop_assert!(diff <= hi + slack, "{diff} > {hi}");
    }

    #[test]
    fn kernels_are_positive_and_decreasing(which in 0usize..4, s in 0.0f64..700.0, ds in 1e-6f64..10.0) {
        let nl = &builtins()[which];
        let (a, b) = (nl.eval_f(s).unwrap(), nl.eval_f(s + ds).unwrap());
        prop_assert!(a > 0.0 && b > 0.0);
        prop_assert!(b <= a);
        prop_assert!(nl.eval_df(s).unwrap() <= 0.0);
    }
}
