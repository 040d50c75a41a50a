//! Stochastic Lyapunov certificates and Monte-Carlo drift checks.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::spectral_norm;
use crate::model::{step_unchecked, PolicyFamily, SystemModel};
use crate::region::RegionDescriptor;
use crate::rng::{substream, Stream};
use crate::scalar::{log_grid, ScalarFn};

/// `V(x) = v(|x|)` with sandwich bounds, drift rate `alpha3`, offset `d_tilde`
/// and estimation penalty `sigma3`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    /// Radial profile of V.
    pub v: ScalarFn,
    pub alpha1: ScalarFn,
    pub alpha2: ScalarFn,
    pub alpha3: ScalarFn,
    pub sigma3: ScalarFn,
    pub d_tilde: f64,
    /// Convex lower bound of `alpha3 o alpha2^{-1}`.
    pub alpha_v: ScalarFn,
    pub region: RegionDescriptor,
    pub vartheta_bar: f64,
}

impl LyapunovCertificate {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.v.eval(x.norm())
    }

    /// Sampled structural checks: `alpha1 <= alpha2`, `alpha_v <= alpha3 o alpha2^{-1}`,
    /// midpoint convexity of `alpha_v`. Returns the failures found.
    pub fn structural_failures(&self, grid: &[f64]) -> Vec<String> {
        let mut out = Vec::new();
        for &r in grid {
            let (a1, a2) = (self.alpha1.eval(r), self.alpha2.eval(r));
            if a1.is_finite() && a1 > a2 * (1.0 + 1e-12) {
                out.push(format!("alpha1({r}) = {a1} > alpha2 = {a2}"));
            }
            if let Ok(inv) = self.alpha2.inverse(r) {
                let rhs = self.alpha3.eval(inv);
                let lhs = self.alpha_v.eval(r);
                if rhs.is_finite() && lhs > rhs * (1.0 + 1e-12) + 1e-300 {
                    out.push(format!("alpha_v({r}) = {lhs} > alpha3(alpha2^-1) = {rhs}"));
                }
            }
        }
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = self.alpha_v.eval(0.5 * (a + b));
            let chord = 0.5 * (self.alpha_v.eval(a) + self.alpha_v.eval(b));
            if mid > chord * (1.0 + 1e-12) + 1e-300 {
                out.push(format!("alpha_v not midpoint convex on [{a}, {b}]"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub mean: f64,
    pub se: f64,
}

/// Monte-Carlo estimate of `E[V(g(x, alpha(x, S, theta* + theta_tilde), W))] - V(x)`.
pub fn lyapunov_drift(
    sys: &SystemModel,
    policy: &PolicyFamily,
    cert: &LyapunovCertificate,
    x: &DVector<f64>,
    vartheta_tilde: &DMatrix<f64>,
    mc_samples: usize,
    seed: u64,
) -> DriftEstimate {
    let theta = sys.theta_star() + vartheta_tilde;
    let v0 = cert.value(x);
    let mut rng_w = substream(seed, 0, 0, Stream::Process);
    let mut rng_s = substream(seed, 0, 0, Stream::Dither);
    let nf = mc_samples.max(1) as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..mc_samples.max(1) {
        let w = sys.process_noise.sample(&mut rng_w);
        let s = policy.dither.sample(&mut rng_s);
        let u = policy.apply(x, &s, &theta);
        let next = step_unchecked(sys, x, &u, &w);
        let dv = cert.value(&next) - v0;
        s1 += dv;
        s2 += dv * dv;
    }
    let mean = s1 / nf;
    let var = if nf > 1.0 { ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0) } else { 0.0 };
    DriftEstimate { mean, se: (var / nf).sqrt() }
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub pass: bool,
    pub sandwich_ok: bool,
    pub drift_ok: bool,
    pub structure_ok: bool,
    /// `min (V - alpha1, alpha2 - V)` over the samples (relative to `1 + V`).
    pub worst_sandwich_margin: f64,
    /// `min (bound + 3 SE - drift)` over the grid.
    pub worst_drift_margin: f64,
    pub worst_drift_x: Vec<f64>,
    pub points_checked: usize,
    /// Points where V overflowed and the drift could not be evaluated.
    pub points_skipped: usize,
    pub failures: Vec<String>,
}

/// Checks the sandwich bounds pointwise and the drift inequality within three
/// standard errors on the `(x, theta_tilde)` grid.
pub fn check_lyapunov(
    sys: &SystemModel,
    policy: &PolicyFamily,
    cert: &LyapunovCertificate,
    x_samples: &[DVector<f64>],
    theta_samples: &[DMatrix<f64>],
    mc_samples: usize,
    seed: u64,
) -> LyapunovReport {
    let mut failures = cert.structural_failures(&log_grid(1e-6, 1e3, 91));
    let structure_ok = failures.is_empty();
    let mut sandwich = f64::INFINITY;
    for x in x_samples {
        let r = x.norm();
        let v = cert.value(x);
        if !v.is_finite() {
            continue;
        }
        let m = (v - cert.alpha1.eval(r)).min(cert.alpha2.eval(r) - v) / (1.0 + v.abs());
        if m < -1e-12 {
            failures.push(format!("sandwich bound fails at |x| = {r}"));
        }
        sandwich = sandwich.min(m);
    }
    let cells: Vec<(usize, usize)> =
        (0..x_samples.len()).flat_map(|i| (0..theta_samples.len()).map(move |j| (i, j))).collect();
    let results: Vec<Option<(f64, usize)>> = cells
        .par_iter()
        .enumerate()
        .map(|(c, &(i, j))| {
            let x = &x_samples[i];
            if !cert.value(x).is_finite() {
                return None;
            }
            let th = &theta_samples[j];
            let est = lyapunov_drift(sys, policy, cert, x, th, mc_samples, seed.wrapping_add(c as u64));
            if !est.mean.is_finite() {
                return None;
            }
            let bound = -cert.alpha3.eval(x.norm()) + cert.d_tilde + cert.sigma3.eval(spectral_norm(th));
            Some((bound + 3.0 * est.se - est.mean, i))
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let (mut worst, mut worst_i) = (f64::INFINITY, 0);
    for (m, i) in results.into_iter().flatten() {
        if m < worst {
            worst = m;
            worst_i = i;
        }
    }
    let drift_ok = worst >= 0.0;
    if !drift_ok {
        failures.push(format!("drift bound fails at x = {:?} by {:.3e}", x_samples[worst_i].as_slice(), -worst));
    }
    let sandwich_ok = sandwich >= -1e-12;
    LyapunovReport {
        pass: sandwich_ok && drift_ok && structure_ok,
        sandwich_ok,
        drift_ok,
        structure_ok,
        worst_sandwich_margin: sandwich,
        worst_drift_margin: worst,
        worst_drift_x: x_samples.get(worst_i).map(|x| x.iter().copied().collect()).unwrap_or_default(),
        points_checked: cells.len() - skipped,
        points_skipped: skipped,
        failures,
    }
}
