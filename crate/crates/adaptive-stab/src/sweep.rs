//! Re-run the bound schedule across values of one configuration parameter.

use serde::Serialize;

use crate::bounds::{BoundSchedule, Horizon, SearchOutcome, VerdictBasis};
use crate::config::{check_delta, ExperimentConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub delta: f64,
    pub holds: bool,
    pub basis: Option<VerdictBasis>,
    pub holds_half: bool,
    pub burn_in: SearchOutcome,
    pub converge: SearchOutcome,
    pub contained: Horizon,
    pub burn_in_upper: Option<u64>,
    pub converge_upper: Option<u64>,
    /// `e(1, delta, x0)`.
    pub e1: f64,
    /// Regularisation part of `e(1)`: `sqrt(gamma) |theta*|_F / sqrt(gamma)`.
    pub e1_prior: f64,
    pub reason: Option<String>,
}

/// One schedule per value; `param` is an example parameter or `delta`.
pub fn sweep(cfg: &ExperimentConfig, param: &str, values: &[f64], delta: f64, cap: u64) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    check_delta(delta)?;
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let (c, dl) = if param == "delta" {
            check_delta(v)?;
            (cfg.clone(), v)
        } else {
            (cfg.with_param(param, v)?, delta)
        };
        let bundle = c.build(None)?;
        let p = bundle.bound_problem();
        let s = BoundSchedule::compute(&p, dl, bundle.x0_norm(), 1, cap)?;
        let e1 = s.rows[1].e.ok_or_else(|| Error::Numeric("missing e(1)".into()))?;
        rows.push(SweepRow {
            value: v,
            delta: dl,
            holds: s.condition.holds,
            basis: s.condition.basis,
            holds_half: s.condition_half.holds,
            burn_in: s.times.burn_in,
            converge: s.times.converge,
            contained: s.times.contained,
            burn_in_upper: s.times.burn_in_upper,
            converge_upper: s.times.converge_upper,
            e1,
            e1_prior: p.gamma.sqrt() * p.theta_star_frob / p.gamma.sqrt(),
            reason: s.condition.reason.clone(),
        });
    }
    Ok(rows)
}

/// Whether the verdicts never go from true back to false along the rows.
pub fn is_monotone(rows: &[SweepRow]) -> bool {
    rows.windows(2).all(|w| !w[0].holds || w[1].holds)
}

/// Index of the first row where the condition holds after failing in the previous row.
pub fn flip_index(rows: &[SweepRow]) -> Option<usize> {
    rows.windows(2).position(|w| !w[0].holds && w[1].holds).map(|i| i + 1)
}
