use std::f64::consts::FRAC_PI_4;

use proptest::prelude::*;

use super::*;
use crate::heralding::DhContext;
use crate::procedures::{choose_method, JoinKind};
use crate::rng::stream;

fn cd(g: f64) -> LeakageProfile {
    LeakageProfile::critically_damped(g).unwrap()
}

fn pair() -> (LeakageProfile, LeakageProfile) {
    (cd(10.0), cd(12.5))
}

fn settings(tol: f64) -> QuadratureSettings {
    let (a, b) = pair();
    QuadratureSettings::for_profiles(&[&a, &b], tol).unwrap()
}

fn t(x: f64) -> TiltAngle {
    TiltAngle::new(x)
}

const U: TiltAngle = TiltAngle::UNTILTED;

#[test]
fn expected_f_identical_profiles() {
    let a = cd(7.0);
    let r = expected_f(U, U, &a, &a, &settings(1e-8)).unwrap();
    assert!((r.value - 0.25).abs() < 1e-14);
    assert_eq!(r.method, EvaluationMethod::ClosedForm);
}

#[test]
fn expected_f_example_pair() {
    let (a, b) = pair();
    let r = expected_f(U, U, &a, &b, &settings(1e-8)).unwrap();
    assert!((r.value - 0.240855).abs() < 1e-6, "{}", r.value);
    let q = expected_f_quadrature(U, U, &a, &b, &settings(1e-8)).unwrap();
    assert!((q.value - r.value).abs() < 1e-7, "{} vs {}", q.value, r.value);
}

#[test]
fn expected_f_tabulated_matches_closed_form() {
    let (a, b) = pair();
    let times: Vec<f64> = (0..=4000).map(|i| i as f64 * 2.0 / 4000.0).collect();
    let (ta, tb) = (a.tabulate(&times).unwrap(), b.tabulate(&times).unwrap());
    let s = settings(1e-8);
    let exact = expected_f(t(0.6), t(0.9), &a, &b, &s).unwrap().value;
    let tab = expected_f(t(0.6), t(0.9), &ta, &tb, &s).unwrap().value;
    assert!((exact - tab).abs() < 1e-5, "{exact} vs {tab}");
}

#[test]
fn efsq_vanishes_on_the_boundary() {
    let (a, b) = pair();
    for (x, y) in [(0.0, 0.7), (0.3, std::f64::consts::FRAC_PI_2), (0.0, 0.0)] {
        // cos(π/2) is 6e-17 in floating point, not zero.
        assert!(expected_f_sq(t(x), t(y), &a, &b, &settings(1e-8)).unwrap().value.abs() < 1e-30);
    }
}

#[test]
fn efsq_diagonal_equals_theta_times_i0() {
    let (a, b) = pair();
    let s = settings(1e-9);
    let i0 = i_n(&a, &b, 0, &s).unwrap();
    assert!((i0 - 0.4656675).abs() < 1e-6, "{i0}");
    for x in [0.3, FRAC_PI_4, 1.1] {
        let (th, _) = theta_weights(t(x), t(x));
        let q = expected_f_sq(t(x), t(x), &a, &b, &s).unwrap().value;
        let (ser, _) = efsq_series(t(x), t(x), &a, &b, 0, &s).unwrap();
        let first = efsq_first_order_with(t(x), t(x), i0).value;
        assert!((q - th * i0).abs() < 1e-6);
        assert!((ser.value - q).abs() < 1e-6);
        assert!((first - q).abs() < 1e-6);
    }
    let at_pi4 = expected_f_sq(U, U, &a, &b, &s).unwrap().value;
    assert!((at_pi4 - 0.1164169).abs() < 1e-6, "{at_pi4}");
}

#[test]
fn first_order_moments() {
    let (a, b) = pair();
    let s = settings(1e-9);
    let i0 = i_n(&a, &b, 0, &s).unwrap();
    let i1 = i_n(&a, &b, 1, &s).unwrap();
    assert!((i1 / i0 - 0.5).abs() < 1e-6, "{}", i1 / i0);
    for n in 0..5 {
        let (i, j) = (i_n(&a, &b, n, &s).unwrap(), j_n(&a, &b, n, &s).unwrap());
        assert!((i - j).abs() < 1e-8 * i0, "n={n}: {i} vs {j}");
    }
}

#[test]
fn moments_decrease() {
    let (a, b) = pair();
    let s = settings(1e-8);
    let v: Vec<f64> = (0..6).map(|n| i_n(&a, &b, n, &s).unwrap()).collect();
    assert!(v.iter().all(|&x| x >= 0.0));
    assert!(v.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn order_eight_series_matches_quadrature() {
    let (a, b) = pair();
    let s = settings(1e-9);
    let q = expected_f_sq(t(0.7), t(0.8), &a, &b, &s).unwrap().value;
    let (ser, terms) = efsq_series(t(0.7), t(0.8), &a, &b, 8, &s).unwrap();
    assert!((ser.value - q).abs() < 1e-4, "{} vs {q}", ser.value);
    assert_eq!(terms.values.len(), 9);
    assert_eq!(ser.method, EvaluationMethod::Series { order: 8 });
}

#[test]
fn series_region_selection_and_errors() {
    let (a, b) = pair();
    let s = settings(1e-7);
    // Θ₁ > Θ₂ puts the smaller parameter in the I_n expansion.
    let (_, terms) = efsq_series(t(0.6), t(0.9), &a, &b, 1, &s).unwrap();
    assert_eq!(terms.region, Region::RJ);
    let (_, terms) = efsq_series(t(0.9), t(0.6), &a, &b, 1, &s).unwrap();
    assert_eq!(terms.region, Region::RI);
    assert!(matches!(efsq_series(t(0.0), t(0.6), &a, &b, 1, &s), Err(Error::Series(_))));
    // Far from the diagonal the smaller parameter still has |K| < 1.
    let (r, terms) = efsq_series(t(0.2), t(1.3), &a, &b, 40, &s).unwrap();
    assert!(terms.k.abs() < 1.0);
    let q = expected_f_sq(t(0.2), t(1.3), &a, &b, &s).unwrap().value;
    assert!((r.value - q).abs() < 1e-2 * q);
}

#[test]
fn first_order_shape_independence() {
    let s1 = settings(1e-8);
    let (c, d) = (cd(5.0), cd(6.0));
    let s2 = QuadratureSettings::for_profiles(&[&c, &d], 1e-8).unwrap();
    let (a, b) = pair();
    for (x, y) in [(0.7, 0.8), (0.5, 0.6)] {
        let r1 = efsq_first_order(t(x), t(y), &a, &b, &s1).unwrap().value / i_n(&a, &b, 0, &s1).unwrap();
        let r2 = efsq_first_order(t(x), t(y), &c, &d, &s2).unwrap().value / i_n(&c, &d, 0, &s2).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
    }
}

#[test]
fn first_order_error_is_second_order_in_k() {
    let (a, b) = pair();
    let s = settings(1e-8);
    let i0 = i_n(&a, &b, 0, &s).unwrap();
    // Anti-diagonal sin²θ_a = 1 − sin²θ_b approaching the centre.
    for s2a in [0.45f64, 0.47, 0.49] {
        let ta = t(s2a.sqrt().asin());
        let tb = t((1.0 - s2a).sqrt().asin());
        let (th1, th2) = theta_weights(ta, tb);
        let k = th1.max(th2) / th1.min(th2) - 1.0;
        let q = expected_f_sq(ta, tb, &a, &b, &s).unwrap().value;
        let f = efsq_first_order_with(ta, tb, i0).value;
        assert!((q - f).abs() < 0.5 * k * k * q, "{s2a}: {q} vs {f}");
    }
}

#[test]
fn evaluator_matches_quadrature() {
    let (a, b) = pair();
    let ev = EfsqEvaluator::new(&a, &b, 1024).unwrap();
    let s = settings(1e-9);
    for (x, y) in [(0.7, 0.8), (0.3, 1.2), (FRAC_PI_4, FRAC_PI_4)] {
        let q = expected_f_sq(t(x), t(y), &a, &b, &s).unwrap().value;
        assert!((ev.evaluate(t(x), t(y)) - q).abs() < 1e-6);
    }
    assert!(EfsqEvaluator::new(&a, &b, 7).is_err());
}

#[test]
fn surface_diagonal_dominates_antidiagonal() {
    let (a, b) = pair();
    let table = efsq_surface(&a, &b, 11, &settings(1e-6)).unwrap();
    assert_eq!(table.len(), 121);
    assert_eq!(table.headers(), ["sin2_theta_a", "sin2_theta_b", "efsq"]);
    let v = |i: usize, j: usize| -> f64 { table.rows()[i * 11 + j][2].parse().unwrap() };
    for i in 0..11 {
        assert!(v(i, i) + 1e-12 >= v(i, 10 - i), "row {i}");
    }
}

#[test]
fn histogram_mass_equals_success_probability() {
    let (a, b) = pair();
    for (x, y) in [(FRAC_PI_4, FRAC_PI_4), (0.6, 0.9)] {
        let h = fidelity_histogram(t(x), t(y), &a, &b, 20, 1e-8).unwrap();
        let p = DhContext::new(t(x), t(y), a.clone(), b.clone()).success_probability();
        assert!((h.total_mass() - p).abs() < 1e-6, "{} vs {p}", h.total_mass());
        assert_eq!(h.edges.len(), 21);
        assert_eq!(h.to_table().len(), 20);
    }
    assert!(fidelity_histogram(U, U, &a, &b, 9, 1e-8).is_err());
}

#[test]
fn identical_profiles_put_everything_in_the_top_bin() {
    let a = cd(10.0);
    let h = fidelity_histogram(U, U, &a, &a, 10, 1e-8).unwrap();
    assert!((h.masses[9] - 0.5).abs() < 1e-6);
    assert!(h.masses[..9].iter().all(|&m| m.abs() < 1e-9));
}

#[test]
fn postselection_window() {
    let (a, b) = pair();
    let [approx, exact] = compare_both(&a, &b, 1e-4, 1e-7).unwrap();
    assert!((approx.p_postselect - 0.03246).abs() < 1e-4, "{}", approx.p_postselect);
    assert_eq!(approx.p_postselect, exact.p_postselect);
    assert!((approx.p_outside_window - 0.3249).abs() < 1e-3, "{}", approx.p_outside_window);
    assert!((exact.p_outside_window - 0.3133).abs() < 1e-3, "{}", exact.p_outside_window);
    for r in [approx, exact] {
        assert_eq!(r.p_total, r.p_postselect + r.p_outside_window);
    }
}

#[test]
fn wide_window_keeps_everything() {
    let (a, b) = pair();
    let r = compare_strategies(&a, &b, 1.0, ComparisonMode::Approx, 1e-7).unwrap();
    assert!((r.p_postselect - 0.5).abs() < 1e-6);
    assert_eq!(r.p_outside_window, 0.0);
    assert!(compare_strategies(&a, &b, 0.0, ComparisonMode::Approx, 1e-7).is_err());
}

#[test]
fn approx_totals_grow_with_window() {
    // Widening the window moves mass from weight 3F² < 1 to weight 1.
    let (a, b) = pair();
    let totals: Vec<f64> = [1e-4, 1e-2, 0.1, 0.3]
        .iter()
        .map(|&e| compare_strategies(&a, &b, e, ComparisonMode::Approx, 1e-7).unwrap().p_total)
        .collect();
    assert!(totals.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{totals:?}");
}

#[test]
fn exact_mode_is_method_two_at_zero_prior() {
    for x in [0.1, 0.4, 0.7, FRAC_PI_4] {
        let f = t(x).gate_quality();
        let c = choose_method(t(x), 0.0, JoinKind::Merge);
        assert!((ComparisonMode::Exact.first_attempt_probability(f) - c.p_ii).abs() < 1e-12);
    }
}

#[test]
fn resource_ratio_examples() {
    assert_eq!(resource_ratio(1.0, 1e6).unwrap(), 1.0);
    let n: f64 = 1e6;
    let ratio = resource_ratio(0.02, n).unwrap() / resource_ratio(0.2, n).unwrap();
    assert!((ratio / 10f64.powf(n.ln()) - 1.0).abs() < 1e-9);
    let r = resource_ratio(0.39, n).unwrap() / resource_ratio(0.033, n).unwrap();
    assert!((r / (0.033f64 / 0.39).powf(n.ln()) - 1.0).abs() < 1e-9);
    assert!(resource_ratio(0.0, 10.0).is_err());
    assert!(resource_ratio(0.5, 1.0).is_err());
}

#[test]
fn monte_carlo_agrees_with_quadrature() {
    let (a, b) = pair();
    let ctx = DhContext::new(t(0.7), t(0.8), a.clone(), b.clone());
    let sampler = DhSampler::new(ctx).unwrap();
    let mc = monte_carlo(&sampler, 100_000, &mut stream(11, 0)).unwrap();
    let s = settings(1e-8);
    let p = ctx_success(&a, &b);
    let ef = expected_f(t(0.7), t(0.8), &a, &b, &s).unwrap().value;
    let ef2 = expected_f_sq(t(0.7), t(0.8), &a, &b, &s).unwrap().value;
    // Conditional means against unconditional integrals over the success mass.
    assert!((mc.success_rate() - p).abs() < 3.0 * mc.se_success_rate(p));
    assert!((mc.mean_f - ef / p).abs() < 3.0 * mc.se_f, "{} vs {}", mc.mean_f, ef / p);
    assert!((mc.mean_f_sq - ef2 / p).abs() < 3.0 * mc.se_f_sq, "{} vs {}", mc.mean_f_sq, ef2 / p);
}

fn ctx_success(a: &LeakageProfile, b: &LeakageProfile) -> f64 {
    DhContext::new(t(0.7), t(0.8), a.clone(), b.clone()).success_probability()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn expectation_bounds(x in 0.05f64..1.5, y in 0.05f64..1.5) {
        let (a, b) = pair();
        let s = settings(1e-6);
        let ef = expected_f(t(x), t(y), &a, &b, &s).unwrap().value;
        let ef2 = expected_f_sq(t(x), t(y), &a, &b, &s).unwrap().value;
        prop_assert!((0.0..=0.25).contains(&ef));
        prop_assert!((0.0..=0.25).contains(&ef2));
        prop_assert!(ef2 <= 0.5 * ef + 1e-9);
        // Conditional variance is non-negative: E(F²)·P ≥ E(F)².
        let p = DhContext::new(t(x), t(y), a.clone(), b.clone()).success_probability();
        prop_assert!(ef2 * p >= ef * ef - 1e-9);
        let flipped = expected_f(t(std::f64::consts::FRAC_PI_2 - x), t(std::f64::consts::FRAC_PI_2 - y), &a, &b, &s)
            .unwrap()
            .value;
        prop_assert!((flipped - ef).abs() < 1e-14);
    }
}
