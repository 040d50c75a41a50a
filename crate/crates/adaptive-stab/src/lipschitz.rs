//! Sampled Lipschitz constant of the feedback part of a policy with respect to its parameter.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::linalg::{min_singular, spectral_norm};
use crate::model::split_theta;
use crate::rng::{substream, Stream};
use crate::scalar::log_grid;

pub const LIPSCHITZ_SAFETY: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    /// Inflated constant `safety * raw_max`.
    pub c: f64,
    pub raw_max: f64,
    pub safety_factor: f64,
    pub ball_radius: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct LipschitzOptions {
    pub sample_budget: usize,
    pub seed: u64,
    /// State radii scanned on a log grid.
    pub x_radius_range: (f64, f64),
}

impl Default for LipschitzOptions {
    fn default() -> Self {
        Self { sample_budget: 40_000, seed: 0, x_radius_range: (1e-4, 1e4) }
    }
}

/// `max |pi(x, theta_hat) - pi(x, theta*)| / |theta_hat - theta*|` over sampled
/// nonzero states and parameters in the spectral ball, times 1.5.
///
/// `policy` is the dither-free control law. The ball must not reach parameters
/// whose input block loses rank; radii at or above `sigma_min(theta*_2)` are refused.
pub fn estimate_policy_lipschitz(
    policy: &(dyn Fn(&DVector<f64>, &DMatrix<f64>) -> DVector<f64> + Sync),
    theta_star: &DMatrix<f64>,
    n: usize,
    ball_radius: f64,
    opts: &LipschitzOptions,
) -> Result<LipschitzEstimate> {
    if !(ball_radius > 0.0) {
        return Err(contract("ball radius must be positive"));
    }
    let (_, t2) = split_theta(theta_star, n);
    let floor = min_singular(&t2);
    if ball_radius >= floor {
        return Err(Error::NotCertified(format!(
            "input block can lose rank inside the ball (sigma_min = {floor:.3e}); use a radius below it"
        )));
    }
    let (d, nn) = theta_star.shape();
    let n_theta = ((opts.sample_budget as f64).sqrt() as usize).max(8);
    let n_x = (opts.sample_budget / n_theta).max(8);
    let mut rng = substream(opts.seed, 0, 0, Stream::Scan);
    let th_radii = log_grid(ball_radius * 1e-4, ball_radius, n_theta);
    let thetas: Vec<DMatrix<f64>> = th_radii
        .iter()
        .map(|&r| {
            let g = DMatrix::from_fn(d, nn, |_, _| rng.sample::<f64, _>(StandardNormal));
            theta_star + g.clone() * (r / spectral_norm(&g))
        })
        .collect();
    for th in &thetas {
        if min_singular(&split_theta(th, n).1) <= 1e-9 {
            return Err(Error::NotCertified("rank collapse inside the ball; use a smaller radius".into()));
        }
    }
    let x_radii = log_grid(opts.x_radius_range.0, opts.x_radius_range.1, n_x);
    let xs: Vec<DVector<f64>> = x_radii
        .iter()
        .map(|&r| {
            let g = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            g.clone() * (r / g.norm())
        })
        .collect();
    let raw_max = xs
        .par_iter()
        .map(|x| {
            let base = policy(x, theta_star);
            thetas
                .iter()
                .map(|th| (policy(x, th) - &base).norm() / spectral_norm(&(th - theta_star)))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(LipschitzEstimate {
        c: LIPSCHITZ_SAFETY * raw_max,
        raw_max,
        safety_factor: LIPSCHITZ_SAFETY,
        ball_radius,
        samples: xs.len() * thetas.len(),
    })
}
