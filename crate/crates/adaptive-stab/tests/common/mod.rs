//! Shared bound oracles written out directly from the definitions.
#![allow(dead_code)]

use std::f64::consts::{LN_2, PI};

use adaptive_stab::bounds::{BoundProblem, ComparisonFunctionSet, ExcitationConstants};
use adaptive_stab::scalar::ScalarFn;

pub fn cfs() -> ComparisonFunctionSet {
    ComparisonFunctionSet {
        chi1: ScalarFn::linear(1e-3),
        chi2: ScalarFn::identity(),
        chi3: ScalarFn::linear(0.1),
        chi4: ScalarFn::identity(),
        chi5: ScalarFn::identity(),
        sigma1: ScalarFn::identity(),
        sigma2: ScalarFn::identity(),
        c1: 0.0,
    }
}

pub fn problem(radius: Option<f64>) -> BoundProblem {
    BoundProblem {
        cfs: cfs(),
        n: 1,
        d: 2,
        u_max: 1.0,
        sigma_w: 0.01,
        gamma: 1.0,
        theta_star_frob: 1.0,
        excitation: Some(ExcitationConstants { c_pe: 1.0, p_pe: 0.25 }),
        vartheta_bar: 0.1,
        rpi_radius: radius,
    }
}

pub fn w_oracle(t: f64, delta: f64, sigma: f64, n: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    sigma * (2.0 * n * (n * PI * PI * t * t / (3.0 * delta)).ln()).sqrt()
}

pub fn x_oracle(t: f64, delta: f64, x0: f64) -> f64 {
    1e-3 * t + x0 + 0.1 * t * 1.0 + t * w_oracle(t, delta, 0.01, 1.0)
}

pub fn z_oracle(t: f64, delta: f64, x0: f64) -> f64 {
    let x = x_oracle(t - 1.0, delta, x0);
    (x * x + 1.0).sqrt()
}

pub fn sums_oracle(delta: f64, x0: f64, len: usize) -> Vec<f64> {
    let mut s = vec![0.0; len + 1];
    for t in 1..=len {
        let z = z_oracle(t as f64, delta, x0);
        s[t] = s[t - 1] + z * z;
    }
    s
}

pub fn e_oracle(t: f64, delta: f64, beta: f64) -> f64 {
    let num = 1.0 + 0.01 * (2.0 * ((3.0 / delta).ln() + (beta / 1.0).ln())).sqrt();
    num / (0.25 * (t - 1.0) / 4.0 + 1.0).sqrt()
}

pub fn burn_slack(t: usize, big_t: usize, s: &[f64], delta: f64) -> f64 {
    let k = 2.0 / ((1.0 - LN_2) * 0.25);
    let head = if t <= 1 { f64::INFINITY } else { k * 2.0 * (1.0 + 16.0 * s[t] / (0.25 * (t - 1) as f64)).ln() + 1.0 };
    let kk = (t - big_t + 1) as f64;
    let tail = k * (PI * PI * kk * kk / (2.0 * delta)).ln();
    t as f64 - head - tail
}

pub fn burn_in_oracle(s: &[f64], delta: f64, cap: usize) -> Option<usize> {
    let found = (1..=cap).find(|&big_t| (big_t..=cap).all(|t| burn_slack(t, big_t, s, delta) >= 0.0))?;
    if found >= cap || burn_slack(cap, found, s, delta) <= burn_slack(cap - 1, found, s, delta) {
        return None;
    }
    Some(found)
}

pub fn converge_oracle(s: &[f64], delta: f64, cap: usize, vb: f64) -> Option<usize> {
    let burn = burn_in_oracle(s, delta, cap)?;
    let e = |t: usize| e_oracle(t as f64, delta, s[t] + 1.0);
    if e(cap) > vb || e(cap) > e(cap - 1) {
        return None;
    }
    let mut t_e = 1;
    for t in 1..=cap {
        if e(t) > vb {
            t_e = t + 1;
        }
    }
    Some(burn.max(t_e))
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

