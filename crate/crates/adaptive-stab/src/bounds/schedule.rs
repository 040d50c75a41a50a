use serde::{Deserialize, Serialize};

use super::search::converge_after;
use super::{
    burn_in_time, check_delta, contained_time, dyadic_burn_in_upper, dyadic_converge_upper, error_from_beta,
    noise_bound_raw, regressor_bound_raw, state_bound_raw, BoundProblem, Horizon, PrefixSums, SearchOutcome,
};
use crate::error::{contract, Result};

/// One row of the time series; `z_bar`, `beta_max` and `e` start at `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub t: u64,
    pub w_bar: f64,
    pub x_bar: f64,
    pub z_bar: Option<f64>,
    pub beta_max: Option<f64>,
    pub e: Option<f64>,
}

/// Characteristic times at one confidence level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicTimes {
    pub delta: f64,
    pub burn_in: SearchOutcome,
    pub converge: SearchOutcome,
    pub contained: Horizon,
    /// Dyadic upper bounds, valid past the search cap.
    pub burn_in_upper: Option<u64>,
    pub converge_upper: Option<u64>,
}

impl CharacteristicTimes {
    /// Exact time when found, otherwise the dyadic upper bound.
    pub fn converge_bound(&self) -> Option<u64> {
        self.converge.found().or(self.converge_upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictBasis {
    /// The invariant set is the whole space.
    Unbounded,
    /// Exact capped search.
    Search,
    /// Dyadic upper bound beyond the cap.
    DyadicUpper,
}

/// Truth of `T_converge + 1 <= T_contained` at one confidence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub delta: f64,
    pub holds: bool,
    pub basis: Option<VerdictBasis>,
    pub converge: Option<u64>,
    pub contained: Horizon,
    pub reason: Option<String>,
}

impl ConditionVerdict {
    fn from_times(times: &CharacteristicTimes) -> Self {
        let contained = times.contained;
        let mk = |holds, basis, converge, reason: Option<String>| Self {
            delta: times.delta,
            holds,
            basis,
            converge,
            contained,
            reason,
        };
        let c = match contained {
            Horizon::Infinite => return mk(true, Some(VerdictBasis::Unbounded), times.converge_bound(), None),
            Horizon::Finite(c) => c,
        };
        if let Some(t) = times.converge.found() {
            let holds = t.checked_add(1).is_some_and(|t1| t1 <= c);
            let reason = (!holds).then(|| format!("T_converge + 1 = {t} + 1 exceeds T_contained = {c}"));
            return mk(holds, Some(VerdictBasis::Search), Some(t), reason);
        }
        match times.converge_upper {
            Some(u) if u.checked_add(1).is_some_and(|u1| u1 <= c) => mk(true, Some(VerdictBasis::DyadicUpper), Some(u), None),
            Some(u) => mk(
                false,
                None,
                None,
                Some(format!(
                    "T_converge not found below the search cap {}; dyadic upper bound {u} + 1 exceeds T_contained = {c}",
                    times.converge
                )),
            ),
            None => mk(
                false,
                None,
                None,
                Some(format!("T_converge not found below the search cap ({}) and no dyadic upper bound below 2^62", times.converge)),
            ),
        }
    }
}

/// Time-indexed bounds and characteristic times for one `(delta, x0)` pair.
///
/// Rows are evaluated at confidence `delta / 3`, the level at which `x_bar` enters the
/// contained time and `beta_max` enters the error bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundSchedule {
    pub horizon: u64,
    pub delta: f64,
    pub x0: f64,
    pub cap: u64,
    pub rows: Vec<ScheduleRow>,
    pub times: CharacteristicTimes,
    /// Times for the `delta / 2` variant used by the stability envelope.
    pub times_half: CharacteristicTimes,
    pub condition: ConditionVerdict,
    pub condition_half: ConditionVerdict,
}

fn times_at(p: &BoundProblem, delta: f64, x0: f64, cap: u64, sums: &PrefixSums) -> Result<CharacteristicTimes> {
    let contained = contained_time(p, delta, x0)?;
    let burn_in = burn_in_time(p, delta, sums, cap)?;
    let converge = converge_after(p, delta, sums, cap, burn_in)?;
    let burn_in_upper = dyadic_burn_in_upper(p, delta, x0)?;
    let converge_upper = dyadic_converge_upper(p, delta, x0)?;
    Ok(CharacteristicTimes { delta, burn_in, converge, contained, burn_in_upper, converge_upper })
}

impl BoundSchedule {
    /// Evaluate rows for `t = 0..=horizon` and search the characteristic times up to `cap`.
    pub fn compute(p: &BoundProblem, delta: f64, x0: f64, horizon: u64, cap: u64) -> Result<Self> {
        check_delta(delta)?;
        if cap < 2 {
            return Err(contract("search cap must be at least 2"));
        }
        let len = cap.max(horizon);
        let sums = PrefixSums::new(p, delta / 3.0, x0, len);
        let times = times_at(p, delta, x0, cap, &sums)?;
        let ex = p.excitation()?;
        let rows = (0..=horizon)
            .map(|t| {
                let tf = t as f64;
                let d3 = delta / 3.0;
                let (z_bar, beta_max, e) = if t == 0 {
                    (None, None, None)
                } else {
                    let beta = sums.get(t) + p.gamma;
                    let z = regressor_bound_raw(tf, d3, x0, &p.cfs, p.u_max, p.sigma_w, p.n);
                    (Some(z), Some(beta), Some(error_from_beta(tf, delta, beta, p, ex)))
                };
                ScheduleRow {
                    t,
                    w_bar: noise_bound_raw(tf, d3, p.sigma_w, p.n),
                    x_bar: state_bound_raw(tf, d3, x0, &p.cfs, p.u_max, p.sigma_w, p.n),
                    z_bar,
                    beta_max,
                    e,
                }
            })
            .collect();
        drop(sums);
        let half_sums = PrefixSums::new(p, delta / 6.0, x0, cap);
        let times_half = times_at(p, delta / 2.0, x0, cap, &half_sums)?;
        Ok(Self {
            horizon,
            delta,
            x0,
            cap,
            rows,
            condition: ConditionVerdict::from_times(&times),
            condition_half: ConditionVerdict::from_times(&times_half),
            times,
            times_half,
        })
    }
}

/// Whether `T_converge(delta) + 1 <= T_contained(delta)` holds for the schedule.
pub fn check_condition(schedule: &BoundSchedule) -> bool {
    schedule.condition.holds
}

/// Verdict from explicit times; exposed for boundary checks.
pub fn condition_from_times(times: &CharacteristicTimes) -> ConditionVerdict {
    ConditionVerdict::from_times(times)
}
