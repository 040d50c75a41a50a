//! Closed-loop simulation, Monte-Carlo ensembles and coverage statistics.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::estimator::{estimation_error, RlsEstimator};
use crate::examples::ExampleBundle;
use crate::linalg::sym_eig_extremes;
use crate::model::{step_unchecked, Trajectory};
use crate::rng::{substream, Stream};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub horizon: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    /// Run trials sequentially on the calling thread.
    pub sequential: bool,
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.n_trials == 0 {
            return Err(contract("horizon and n_trials must be at least 1"));
        }
        Ok(())
    }
}

/// One closed-loop run; a deterministic function of `(base_seed, trial)`.
///
/// The control at time `t` uses `theta_hat(t - 1)`. A non-finite state ends the run
/// and sets `diverged`.
pub fn run_trial(bundle: &ExampleBundle, horizon: usize, base_seed: u64, trial: u64) -> Result<Trajectory> {
    let sys = &bundle.system;
    let policy = &bundle.policy;
    let mut est = RlsEstimator::new(bundle.gamma, bundle.vartheta0.clone())?;
    let mut tr = Trajectory::default();
    let mut x = bundle.x0.clone();
    tr.states.push(x.clone());
    tr.estimates.push(bundle.vartheta0.clone());
    tr.estimates.push(est.estimate()?);
    for t in 0..horizon {
        let theta_prev = &tr.estimates[t];
        let s = policy.dither.sample(&mut substream(base_seed, trial, t as u64, Stream::Dither));
        let u = policy.apply(&x, &s, theta_prev);
        let w = sys.process_noise.sample(&mut substream(base_seed, trial, t as u64 + 1, Stream::Process));
        let next = step_unchecked(sys, &x, &u, &w);
        if next.iter().any(|v| !v.is_finite()) {
            tr.diverged = true;
            break;
        }
        let z = sys.psi(&x, &u);
        est.update(&z, &next, &sys.f(&x, &u))?;
        tr.controls.push(u);
        tr.dithers.push(s);
        tr.noises.push(w);
        tr.regressors.push(z);
        tr.states.push(next.clone());
        tr.estimates.push(est.estimate()?);
        x = next;
    }
    Ok(tr)
}

/// Per-trial reduction kept by ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: u64,
    /// `|X(t)|` for `t = 0..=len`.
    pub abs_x: Vec<f64>,
    /// `|theta_hat(t) - theta*|` for `t = 0..=len`.
    pub err: Vec<f64>,
    /// `lambda_min(G(t))` for `t = 0..=len`.
    pub lambda_min: Vec<f64>,
    /// Whether every state lies in the invariant region of the bundle.
    pub stayed_in_rpi: bool,
    pub diverged: bool,
}

impl TrialSummary {
    pub fn from_trajectory(bundle: &ExampleBundle, trial: u64, tr: &Trajectory) -> Result<Self> {
        let theta_star = bundle.system.theta_star();
        let err = tr.estimates[1..].iter().map(|th| estimation_error(th, theta_star)).collect::<Result<Vec<_>>>()?;
        let d = bundle.system.d;
        let mut g = nalgebra::DMatrix::<f64>::identity(d, d) * bundle.gamma;
        let mut lambda_min = Vec::with_capacity(tr.regressors.len() + 1);
        lambda_min.push(bundle.gamma);
        for z in &tr.regressors {
            g.ger(1.0, z, z, 1.0);
            lambda_min.push(sym_eig_extremes(&g).0);
        }
        let region = &bundle.rpi.region;
        Ok(Self {
            trial,
            abs_x: tr.states.iter().map(DVector::norm).collect(),
            err,
            lambda_min,
            stayed_in_rpi: !tr.diverged && tr.states.iter().all(|x| region.contains(x)),
            diverged: tr.diverged,
        })
    }
}

/// Fraction of successes with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub successes: usize,
    pub trials: usize,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

impl Coverage {
    pub fn from_counts(successes: usize, trials: usize) -> Self {
        if trials == 0 {
            return Self { successes, trials, fraction: f64::NAN, wilson_low: 0.0, wilson_high: 1.0 };
        }
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = WILSON_Z * WILSON_Z;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Self { successes, trials, fraction: p, wilson_low: (centre - half).max(0.0), wilson_high: (centre + half).min(1.0) }
    }

    /// Half-width of the Wilson interval.
    pub fn radius(&self) -> f64 {
        0.5 * (self.wilson_high - self.wilson_low)
    }
}

/// Fraction of items satisfying `pred`; diverged trials should be rejected by the predicate.
pub fn coverage<T>(items: &[T], pred: impl Fn(&T) -> bool) -> Coverage {
    Coverage::from_counts(items.iter().filter(|t| pred(t)).count(), items.len())
}

/// Nearest-rank quantile: the `ceil(q N)`-th smallest value (the minimum at `q = 0`).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Per-time nearest-rank quantile over series of length `len`; missing entries
/// (runs that stopped early) count as `+inf`.
pub fn quantile_series(series: &[&[f64]], len: usize, q: f64) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(contract("quantile of an empty set"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(contract(format!("quantile level must lie in [0, 1], got {q}")));
    }
    let mut col = vec![0.0; series.len()];
    Ok((0..len)
        .map(|t| {
            for (c, s) in col.iter_mut().zip(series) {
                *c = s.get(t).copied().unwrap_or(f64::INFINITY);
            }
            col.sort_by(f64::total_cmp);
            nearest_rank(&col, q)
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub horizon: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    pub diverged: usize,
    pub median_abs_x: Vec<f64>,
    pub q90_abs_x: Vec<f64>,
    pub median_err: Vec<f64>,
    pub q90_err: Vec<f64>,
    pub rpi_coverage: Coverage,
    #[serde(skip)]
    pub trials: Vec<TrialSummary>,
}

impl EnsembleStats {
    /// Quantile of `|X(t)|` at an arbitrary level.
    pub fn abs_x_quantile(&self, q: f64) -> Result<Vec<f64>> {
        let s: Vec<&[f64]> = self.trials.iter().map(|t| t.abs_x.as_slice()).collect();
        quantile_series(&s, self.horizon + 1, q)
    }

    pub fn err_quantile(&self, q: f64) -> Result<Vec<f64>> {
        let s: Vec<&[f64]> = self.trials.iter().map(|t| t.err.as_slice()).collect();
        quantile_series(&s, self.horizon + 1, q)
    }
}

/// Run `n_trials` independent trials and reduce them to quantile series.
pub fn run_ensemble(bundle: &ExampleBundle, cfg: &SimSettings) -> Result<EnsembleStats> {
    cfg.validate()?;
    let one = |i: u64| -> Result<TrialSummary> {
        let tr = run_trial(bundle, cfg.horizon, cfg.base_seed, i)?;
        TrialSummary::from_trajectory(bundle, i, &tr)
    };
    let ids: Vec<u64> = (0..cfg.n_trials as u64).collect();
    let trials: Vec<TrialSummary> = if cfg.sequential {
        ids.iter().map(|&i| one(i)).collect::<Result<_>>()?
    } else {
        ids.par_iter().map(|&i| one(i)).collect::<Result<_>>()?
    };
    let len = cfg.horizon + 1;
    let ax: Vec<&[f64]> = trials.iter().map(|t| t.abs_x.as_slice()).collect();
    let er: Vec<&[f64]> = trials.iter().map(|t| t.err.as_slice()).collect();
    Ok(EnsembleStats {
        horizon: cfg.horizon,
        n_trials: cfg.n_trials,
        base_seed: cfg.base_seed,
        diverged: trials.iter().filter(|t| t.diverged).count(),
        median_abs_x: quantile_series(&ax, len, 0.5)?,
        q90_abs_x: quantile_series(&ax, len, 0.9)?,
        median_err: quantile_series(&er, len, 0.5)?,
        q90_err: quantile_series(&er, len, 0.9)?,
        rpi_coverage: coverage(&trials, |t| t.stayed_in_rpi),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        let v = [1.0, 2.0, 3.0];
        assert_eq!(nearest_rank(&v, 0.5), 2.0);
        assert_eq!(nearest_rank(&v, 0.0), 1.0);
        assert_eq!(nearest_rank(&v, 1.0), 3.0);
    }

    #[test]
    fn coverage_extremes() {
        let xs = [1, 2, 3];
        assert_eq!(coverage(&xs, |_| true).fraction, 1.0);
        assert_eq!(coverage(&xs, |_| false).fraction, 0.0);
    }
}
