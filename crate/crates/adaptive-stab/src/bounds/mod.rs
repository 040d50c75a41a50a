//! Closed-form bounds, characteristic times and stability envelopes.

mod envelope;
mod schedule;
mod search;

pub use envelope::{stability_envelope, EnvelopeOptions, ErrorSource, LambdaExponent, StabilityEnvelope};
pub use schedule::{
    check_condition, condition_from_times, BoundSchedule, CharacteristicTimes, ConditionVerdict, ScheduleRow, VerdictBasis,
};
pub use search::{
    burn_in_time, contained_time, converge_time, dyadic_burn_in_upper, dyadic_converge_upper, Horizon,
    PrefixSums, SearchOutcome, DYADIC_LIMIT_EXP,
};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::excitation::ExcitationCertificate;
use crate::scalar::{check_class_k_inf, log_grid, ScalarFn};

/// Growth envelopes `chi1..chi5`, `sigma1`, `sigma2` and offset `c1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonFunctionSet {
    pub chi1: ScalarFn,
    pub chi2: ScalarFn,
    pub chi3: ScalarFn,
    pub chi4: ScalarFn,
    pub chi5: ScalarFn,
    pub sigma1: ScalarFn,
    pub sigma2: ScalarFn,
    pub c1: f64,
}

impl ComparisonFunctionSet {
    /// Sampled class-K-infinity check of every member on a log grid.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.c1 >= 0.0) {
            return Err("c1 must be non-negative".into());
        }
        let grid = log_grid(1e-6, 1e6, 61);
        for f in [&self.chi1, &self.chi2, &self.chi3, &self.chi4, &self.chi5, &self.sigma1, &self.sigma2] {
            check_class_k_inf(f, &grid)?;
        }
        Ok(())
    }
}

/// The excitation constants entering the error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationConstants {
    pub c_pe: f64,
    pub p_pe: f64,
}

impl From<&ExcitationCertificate> for ExcitationConstants {
    fn from(c: &ExcitationCertificate) -> Self {
        Self { c_pe: c.c_pe, p_pe: c.p_pe }
    }
}

/// Everything the bound formulas need about one closed loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundProblem {
    pub cfs: ComparisonFunctionSet,
    pub n: usize,
    pub d: usize,
    pub u_max: f64,
    pub sigma_w: f64,
    pub gamma: f64,
    pub theta_star_frob: f64,
    pub excitation: Option<ExcitationConstants>,
    pub vartheta_bar: f64,
    /// Radius of the largest origin ball inside the invariant set; `None` for the whole space.
    pub rpi_radius: Option<f64>,
}

impl BoundProblem {
    pub(crate) fn excitation(&self) -> Result<ExcitationConstants> {
        self.excitation.ok_or_else(|| Error::Missing("excitation certificate".into()))
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(contract(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// `w_bar(t, delta) = sigma_w sqrt(2 n ln(n pi^2 t^2 / (3 delta)))`, zero at `t = 0`.
pub fn noise_bound(t: u64, delta: f64, sigma_w: f64, n: usize) -> Result<f64> {
    check_delta(delta)?;
    Ok(noise_bound_raw(t as f64, delta, sigma_w, n))
}

pub(crate) fn noise_bound_raw(t: f64, delta: f64, sigma_w: f64, n: usize) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    sigma_w * (2.0 * nf * (nf * PI * PI * t * t / (3.0 * delta)).ln()).sqrt()
}

/// `x_bar = chi1(t) + chi2(|x0|) + chi3(t sigma1(u_max)) + chi4(t sigma2(w_bar(t))) + c1`.
pub fn state_bound(t: u64, delta: f64, x0: f64, cfs: &ComparisonFunctionSet, u_max: f64, sigma_w: f64, n: usize) -> Result<f64> {
    check_delta(delta)?;
    Ok(state_bound_raw(t as f64, delta, x0, cfs, u_max, sigma_w, n))
}

pub(crate) fn state_bound_raw(t: f64, delta: f64, x0: f64, cfs: &ComparisonFunctionSet, u_max: f64, sigma_w: f64, n: usize) -> f64 {
    let w = noise_bound_raw(t, delta, sigma_w, n);
    cfs.chi1.eval(t)
        + cfs.chi2.eval(x0.abs())
        + cfs.chi3.eval(t * cfs.sigma1.eval(u_max))
        + cfs.chi4.eval(t * cfs.sigma2.eval(w))
        + cfs.c1
}

/// `z_bar(t) = chi5(sqrt(x_bar(t-1)^2 + u_max^2))`, defined for `t >= 1`.
pub fn regressor_bound(t: u64, delta: f64, x0: f64, cfs: &ComparisonFunctionSet, u_max: f64, sigma_w: f64, n: usize) -> Result<f64> {
    check_delta(delta)?;
    if t == 0 {
        return Err(contract("regressor bound is defined for t >= 1"));
    }
    Ok(regressor_bound_raw(t as f64, delta, x0, cfs, u_max, sigma_w, n))
}

pub(crate) fn regressor_bound_raw(t: f64, delta: f64, x0: f64, cfs: &ComparisonFunctionSet, u_max: f64, sigma_w: f64, n: usize) -> f64 {
    let xb = state_bound_raw(t - 1.0, delta, x0, cfs, u_max, sigma_w, n);
    cfs.chi5.eval(xb.hypot(u_max))
}

/// `beta_max(t) = sum_{i=1}^t z_bar(i)^2 + gamma`.
pub fn gramian_upper(t: u64, delta: f64, x0: f64, p: &BoundProblem) -> Result<f64> {
    check_delta(delta)?;
    if t == 0 {
        return Err(contract("Gramian bound is defined for t >= 1"));
    }
    let mut s = 0.0;
    for i in 1..=t {
        let z = regressor_bound_raw(i as f64, delta, x0, &p.cfs, p.u_max, p.sigma_w, p.n);
        s += z * z;
    }
    Ok(s + p.gamma)
}

/// Numerator of the error bound given `beta_max(t, delta/3)`.
pub(crate) fn error_numerator(delta: f64, beta: f64, p: &BoundProblem) -> f64 {
    let (n, d) = (p.n as f64, p.d as f64);
    let inner = (3.0 * n / delta).ln() + 0.5 * d * (beta / p.gamma).ln();
    p.gamma.sqrt() * p.theta_star_frob + p.sigma_w * (2.0 * n * inner).sqrt()
}

pub(crate) fn error_from_beta(t: f64, delta: f64, beta: f64, p: &BoundProblem, ex: ExcitationConstants) -> f64 {
    let denom = ex.c_pe * ex.p_pe * (t - 1.0) / 4.0 + p.gamma;
    error_numerator(delta, beta, p) / denom.sqrt()
}

/// `e(t, delta, x0)` for `t = 1..=horizon` from one pass of prefix sums.
pub fn error_series(p: &BoundProblem, delta: f64, x0: f64, horizon: u64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    let ex = p.excitation()?;
    let sums = PrefixSums::new(p, delta / 3.0, x0, horizon);
    Ok((1..=horizon).map(|t| error_from_beta(t as f64, delta, sums.get(t) + p.gamma, p, ex)).collect())
}

/// `e(t, delta, x0)`, using `beta_max` at confidence `delta / 3`.
pub fn error_envelope(t: u64, delta: f64, x0: f64, p: &BoundProblem) -> Result<f64> {
    check_delta(delta)?;
    let ex = p.excitation()?;
    if t == 0 {
        return Err(contract("error bound is defined for t >= 1"));
    }
    let beta = gramian_upper(t, delta / 3.0, x0, p)?;
    Ok(error_from_beta(t as f64, delta, beta, p, ex))
}
