//! Bound formulas and capped searches against hand-written oracles.

mod common;

use std::f64::consts::{E, LN_2, PI};

use adaptive_stab::bounds::*;
use adaptive_stab::scalar::{numeric_inverse, ScalarFn};
use common::*;
use proptest::prelude::*;

#[test]
fn noise_bound_closed_form_value() {
    // ln(pi^2 / (3 delta)) = 2 at t = 1, n = 1 gives exactly 2.
    let delta = PI * PI / (3.0 * E * E);
    assert!((noise_bound(1, delta, 1.0, 1).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(noise_bound(0, 0.1, 1.0, 3).unwrap(), 0.0);
    for &(t, d, s, n) in &[(1u64, 0.1, 0.07, 1usize), (50, 0.05, 0.3, 2), (10_000, 0.2, 1.0, 3)] {
        assert!(rel(noise_bound(t, d, s, n).unwrap(), w_oracle(t as f64, d, s, n as f64)) < 1e-12);
    }
    assert!(noise_bound(1, 0.0, 1.0, 1).is_err());
    assert!(noise_bound(1, 1.0, 1.0, 1).is_err());
}

#[test]
fn state_regressor_gramian_match_oracles() {
    let p = problem(None);
    for &t in &[0u64, 1, 7, 100, 4321] {
        let x = state_bound(t, 0.1, 0.5, &p.cfs, 1.0, 0.01, 1).unwrap();
        assert!(rel(x, x_oracle(t as f64, 0.1, 0.5)) < 1e-12, "t = {t}");
    }
    assert!(rel(state_bound(0, 0.1, -2.0, &p.cfs, 1.0, 0.01, 1).unwrap(), 2.0) < 1e-12);
    for &t in &[1u64, 2, 300] {
        let z = regressor_bound(t, 0.1, 0.5, &p.cfs, 1.0, 0.01, 1).unwrap();
        assert!(rel(z, z_oracle(t as f64, 0.1, 0.5)) < 1e-12);
    }
    assert!(regressor_bound(0, 0.1, 0.5, &p.cfs, 1.0, 0.01, 1).is_err());
    let s = sums_oracle(0.1, 0.5, 500);
    for &t in &[1u64, 10, 500] {
        assert!(rel(gramian_upper(t, 0.1, 0.5, &p).unwrap(), s[t as usize] + 1.0) < 1e-12);
    }
    // z_bar(1) = sqrt(x0^2 + u_max^2).
    assert!(rel(regressor_bound(1, 0.3, 0.0, &p.cfs, 1.0, 0.01, 1).unwrap(), 1.0) < 1e-12);
}

#[test]
fn error_bound_matches_oracle_and_series() {
    let p = problem(None);
    let delta = 0.1;
    let s = sums_oracle(delta / 3.0, 0.5, 2000);
    let series = error_series(&p, delta, 0.5, 2000).unwrap();
    for &t in &[1usize, 2, 17, 999, 2000] {
        let want = e_oracle(t as f64, delta, s[t] + 1.0);
        assert!(rel(error_envelope(t as u64, delta, 0.5, &p).unwrap(), want) < 1e-12);
        assert!(rel(series[t - 1], want) < 1e-12);
    }
    // At t = 1 the denominator is sqrt(gamma).
    let e1 = series[0];
    let num = e1 * p.gamma.sqrt();
    let noise = (num - p.gamma.sqrt() * p.theta_star_frob) / p.sigma_w;
    let inner = noise * noise / (2.0 * p.n as f64);
    let back = (3.0 / delta).ln() + 0.5 * p.d as f64 * ((s[1] + 1.0) / 1.0).ln();
    assert!((inner - back).abs() < 1e-9);
}

#[test]
fn error_needs_excitation() {
    let mut p = problem(None);
    p.excitation = None;
    assert!(matches!(error_envelope(2, 0.1, 0.5, &p), Err(adaptive_stab::Error::Missing(_))));
}

#[test]
fn searches_match_linear_scans() {
    let p = problem(Some(1000.0));
    for &(delta, cap) in &[(0.1, 20_000u64), (0.05, 100_000), (0.3, 5_000)] {
        let sums = PrefixSums::new(&p, delta / 3.0, 0.5, cap);
        let s = sums_oracle(delta / 3.0, 0.5, cap as usize);
        for t in [1, cap / 2, cap] {
            assert!(rel(sums.get(t), s[t as usize]) < 1e-12);
        }
        let burn = burn_in_time(&p, delta, &sums, cap).unwrap();
        let want_burn = burn_in_oracle(&s, delta, cap as usize);
        assert_eq!(burn.found().map(|t| t as usize), want_burn, "burn-in delta = {delta}");
        assert!(want_burn.is_some());
        let conv = converge_time(&p, delta, &sums, cap).unwrap();
        assert_eq!(conv.found().map(|t| t as usize), converge_oracle(&s, delta, cap as usize, 0.1));
        assert!(conv.found().is_some());
    }
}

#[test]
fn burn_in_not_found_below_a_small_cap() {
    let p = problem(None);
    let sums = PrefixSums::new(&p, 0.1 / 3.0, 0.5, 50);
    let out = burn_in_time(&p, 0.1, &sums, 50).unwrap();
    assert!(matches!(out, SearchOutcome::NotFound { cap: 50, .. }));
    assert!(burn_in_oracle(&sums_oracle(0.1 / 3.0, 0.5, 50), 0.1, 50).is_none());
}

#[test]
fn contained_time_matches_linear_scan() {
    for &(r, delta) in &[(1000.0, 0.1), (200.0, 0.01), (5.0, 0.2)] {
        let p = problem(Some(r));
        let got = contained_time(&p, delta, 0.5).unwrap();
        let mut last = 0u64;
        let mut t = 1u64;
        while x_oracle(t as f64, delta / 3.0, 0.5) <= r {
            last = t;
            t += 1;
        }
        assert_eq!(got, Horizon::Finite(last), "r = {r}");
    }
    assert_eq!(contained_time(&problem(Some(0.1)), 0.1, 0.5).unwrap(), Horizon::Finite(0));
    assert_eq!(contained_time(&problem(None), 0.1, 0.5).unwrap(), Horizon::Infinite);
}

#[test]
fn dyadic_uppers_dominate_exact_times() {
    let p = problem(Some(1000.0));
    let cap = 20_000;
    let sums = PrefixSums::new(&p, 0.1 / 3.0, 0.5, cap);
    let burn = burn_in_time(&p, 0.1, &sums, cap).unwrap().found().unwrap();
    let conv = converge_time(&p, 0.1, &sums, cap).unwrap().found().unwrap();
    let bu = dyadic_burn_in_upper(&p, 0.1, 0.5).unwrap().unwrap();
    let cu = dyadic_converge_upper(&p, 0.1, 0.5).unwrap().unwrap();
    assert!(bu >= burn && cu >= conv && cu >= bu);
    assert!(bu.is_power_of_two() && cu.is_power_of_two());
}

fn times(converge: SearchOutcome, upper: Option<u64>, contained: Horizon) -> CharacteristicTimes {
    CharacteristicTimes {
        delta: 0.1,
        burn_in: SearchOutcome::Found { t: 1 },
        converge,
        contained,
        burn_in_upper: None,
        converge_upper: upper,
    }
}

#[test]
fn condition_boundary_cases() {
    let found = |t| SearchOutcome::Found { t };
    let nf = SearchOutcome::NotFound { cap: 100, slack_at_cap: -1.0 };
    let v = condition_from_times(&times(found(10), None, Horizon::Finite(11)));
    assert!(v.holds && v.basis == Some(VerdictBasis::Search));
    let v = condition_from_times(&times(found(11), None, Horizon::Finite(11)));
    assert!(!v.holds && v.reason.is_some());
    let v = condition_from_times(&times(nf, None, Horizon::Infinite));
    assert!(v.holds && v.basis == Some(VerdictBasis::Unbounded));
    let v = condition_from_times(&times(nf, Some(512), Horizon::Finite(513)));
    assert!(v.holds && v.basis == Some(VerdictBasis::DyadicUpper));
    let v = condition_from_times(&times(nf, Some(512), Horizon::Finite(512)));
    assert!(!v.holds);
    let v = condition_from_times(&times(nf, None, Horizon::Finite(u64::MAX)));
    assert!(!v.holds && v.reason.unwrap().contains("2^62"));
    let v = condition_from_times(&times(found(u64::MAX), None, Horizon::Finite(u64::MAX)));
    assert!(!v.holds);
}

#[test]
fn schedule_agrees_with_direct_calls() {
    let p = problem(Some(1000.0));
    let s = BoundSchedule::compute(&p, 0.1, 0.5, 50, 20_000).unwrap();
    assert_eq!(s.rows.len(), 51);
    assert!(s.rows[0].e.is_none() && s.rows[0].z_bar.is_none());
    assert!(rel(s.rows[50].x_bar, x_oracle(50.0, 0.1 / 3.0, 0.5)) < 1e-12);
    assert!(rel(s.rows[50].e.unwrap(), error_envelope(50, 0.1, 0.5, &p).unwrap()) < 1e-12);
    let sums = PrefixSums::new(&p, 0.1 / 3.0, 0.5, 20_000);
    assert_eq!(s.times.converge, converge_time(&p, 0.1, &sums, 20_000).unwrap());
    assert_eq!(s.times.contained, contained_time(&p, 0.1, 0.5).unwrap());
    assert_eq!(s.condition.holds, check_condition(&s));
    let c = s.times.converge.found().unwrap();
    let k = match s.times.contained {
        Horizon::Finite(k) => k,
        Horizon::Infinite => unreachable!(),
    };
    assert_eq!(s.condition.holds, c + 1 <= k);
    assert_eq!(s.times_half.delta, 0.05);
}

#[test]
fn numeric_inverse_examples() {
    let x = numeric_inverse(|r| r * r * r, 8.0, (0.0, 10.0)).unwrap();
    assert!((x - 2.0).abs() < 1e-9);
    let x = numeric_inverse(f64::exp_m1, 1.0, (0.0, 5.0)).unwrap();
    assert!((x - LN_2).abs() < 1e-9);
    assert!(numeric_inverse(|r| r, 20.0, (0.0, 10.0)).is_err());
    let f = ScalarFn::exp_m1(2.0, 0.5);
    assert!((f.inverse(f.eval(3.0)).unwrap() - 3.0).abs() < 1e-12);
    let c = ScalarFn::custom("cube", |r| r * r * r + r);
    assert!((c.inverse(10.0).unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(ScalarFn::linear(4.0).inverse(f64::INFINITY).unwrap(), f64::INFINITY);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounds_are_monotone(t in 1u64..100_000, d1 in 0.001f64..0.5, x0 in 0.0f64..100.0) {
        let p = problem(None);
        let d2 = d1 * 1.5;
        let w = noise_bound(t, d1, 0.3, 2).unwrap();
        prop_assert!(noise_bound(t + 1, d1, 0.3, 2).unwrap() >= w);
        prop_assert!(noise_bound(t, d2, 0.3, 2).unwrap() <= w);
        let x = state_bound(t, d1, x0, &p.cfs, 1.0, 0.01, 1).unwrap();
        prop_assert!(state_bound(t + 1, d1, x0, &p.cfs, 1.0, 0.01, 1).unwrap() >= x);
        prop_assert!(state_bound(t, d1, x0 + 1.0, &p.cfs, 1.0, 0.01, 1).unwrap() >= x);
        prop_assert!(state_bound(t, d2, x0, &p.cfs, 1.0, 0.01, 1).unwrap() <= x);
        let z = regressor_bound(t, d1, x0, &p.cfs, 1.0, 0.01, 1).unwrap();
        prop_assert!(regressor_bound(t + 1, d1, x0, &p.cfs, 1.0, 0.01, 1).unwrap() >= z);
    }

    #[test]
    fn gramian_upper_increases(t in 1u64..400, x0 in 0.0f64..10.0) {
        let p = problem(None);
        prop_assert!(gramian_upper(t + 1, 0.1, x0, &p).unwrap() > gramian_upper(t, 0.1, x0, &p).unwrap());
    }

    #[test]
    fn contained_time_shrinks_with_confidence(r in 5.0f64..5000.0, d in 0.01f64..0.9) {
        let p = problem(Some(r));
        let a = contained_time(&p, d, 0.5).unwrap();
        let b = contained_time(&p, d / 10.0, 0.5).unwrap();
        let (Horizon::Finite(a), Horizon::Finite(b)) = (a, b) else { panic!("bounded radius") };
        prop_assert!(b <= a);
        prop_assert!(x_oracle(a as f64, d / 3.0, 0.5) <= r * (1.0 + 1e-12));
        prop_assert!(x_oracle(a as f64 + 1.0, d / 3.0, 0.5) > r);
    }
}
