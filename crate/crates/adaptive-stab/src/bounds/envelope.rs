use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{check_delta, error_from_beta, regressor_bound_raw, state_bound_raw, BoundProblem, BoundSchedule, PrefixSums};
use crate::error::{contract, Error, Result};
use crate::lyapunov::LyapunovCertificate;
use crate::scalar::ScalarFn;

/// Exponent applied to `lambda` in the `beta2` / `eta2` terms at `t = T0 + 1 + k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaExponent {
    /// `ceil(k / 2)`, the number of steps elapsed since the middle of the window.
    #[default]
    HalfElapsed,
    /// `T0 + 1 + ceil(k / 2)`.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeOptions {
    /// Number of post-`T0` steps evaluated exactly before the tail bound.
    pub window: u64,
    pub lambda_exponent: LambdaExponent,
    /// Grid size for `max_{[0, r]} lambda1` when `alpha_v` is not linear.
    pub lambda_grid: usize,
    /// Largest `T0 + window` for which `beta_max` is summed exactly.
    pub exact_sum_limit: u64,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self { window: 4096, lambda_exponent: LambdaExponent::HalfElapsed, lambda_grid: 257, exact_sum_limit: 2_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSource {
    /// `beta_max` summed term by term.
    ExactSum,
    /// `beta_max(t) <= t z_bar(t)^2 + gamma`.
    UpperBound,
    /// Supplied by the caller.
    Supplied,
}

/// Transient bound `eta` and offset `c2` with `|X(t)| <= eta(t) + c2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityEnvelope {
    pub delta: f64,
    pub t0: u64,
    pub plateau: f64,
    pub c2: f64,
    /// `eta_tilde(T0 + 1 + k)` for `k = 0..=window + 1`.
    pub eta_tilde_post: Vec<f64>,
    /// `eta(T0 + 1 + k)` for `k = 0..=window + 1`; the last entry also bounds every later time.
    pub eta_post: Vec<f64>,
    /// `eta(t)` for `t <= T0`.
    pub eta_head: f64,
    /// The tail bound assumes `e` is non-increasing past the window.
    pub tail_assumes_monotone_e: bool,
    /// Whether `e` was observed non-increasing over the second half of the window.
    pub tail_monotone_observed: bool,
    pub e_source: ErrorSource,
    pub options: EnvelopeOptions,
    #[serde(skip)]
    lyap: Option<LyapunovCertificate>,
}

struct Lambda<'a> {
    alpha_v: &'a ScalarFn,
    grid: usize,
    linear: Option<f64>,
}

impl Lambda<'_> {
    fn lambda1(&self, r: f64) -> f64 {
        r - self.alpha_v.eval(r) + self.alpha_v.eval(r / 2.0)
    }

    fn lambda(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if let Some(a) = self.linear {
            return r * (1.0 - a / 4.0);
        }
        let n = self.grid.max(2);
        let m = (0..=n).map(|i| self.lambda1(r * i as f64 / n as f64)).fold(f64::NEG_INFINITY, f64::max);
        0.5 * (r + m)
    }

    /// `lambda^i(v)` for `i = 0..=k`, truncated once the value falls below `1e-30`.
    fn orbit(&self, v: f64, k: u64) -> Vec<f64> {
        let mut out = Vec::with_capacity(k as usize + 1);
        let mut x = v;
        out.push(x);
        for _ in 0..k {
            if x < 1e-30 {
                break;
            }
            x = self.lambda(x);
            out.push(x);
        }
        out
    }

    fn pow(&self, v: f64, k: u64) -> f64 {
        if let Some(a) = self.linear {
            return v * (1.0 - a / 4.0).powf(k as f64);
        }
        let mut x = v;
        for _ in 0..k {
            if x < 1e-30 {
                return 0.0;
            }
            x = self.lambda(x);
        }
        x
    }
}

fn lambda_of(lyap: &LyapunovCertificate, grid: usize) -> Lambda<'_> {
    Lambda { alpha_v: &lyap.alpha_v, grid, linear: lyap.alpha_v.as_linear() }
}

fn gamma_tilde(lyap: &LyapunovCertificate, r: f64) -> Result<f64> {
    Ok(2.0 * lyap.alpha_v.inverse(r)?.max(r))
}

fn alpha1_inv(lyap: &LyapunovCertificate, delta: f64, v: f64) -> Result<f64> {
    lyap.alpha1.inverse(2.0 / delta * v)
}

fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 { x + (-(-x).exp()).ln_1p() } else { x.exp_m1().ln() }
}

fn ln1p_exp(y: f64) -> f64 {
    if y > 30.0 { y + (-y).exp().ln_1p() } else { y.exp().ln_1p() }
}

/// `ln f(r)` in closed form, without forming `f(r)`.
fn ln_eval(f: &ScalarFn, r: f64) -> Option<f64> {
    match f {
        ScalarFn::Linear { slope } => Some(slope.ln() + r.ln()),
        ScalarFn::ExpM1 { scale, rate } => Some(scale.ln() + ln_expm1(rate * r)),
        ScalarFn::Power { coeff, exponent } => Some(coeff.ln() + exponent * r.ln()),
        ScalarFn::Custom { .. } => None,
    }
}

/// `f^{-1}(e^l)` in closed form.
fn inv_from_ln(f: &ScalarFn, l: f64) -> Option<f64> {
    match f {
        ScalarFn::Linear { slope } => Some((l - slope.ln()).exp()),
        ScalarFn::ExpM1 { scale, rate } => Some(ln1p_exp(l - scale.ln()) / rate),
        ScalarFn::Power { coeff, exponent } => Some(((l - coeff.ln()) / exponent).exp()),
        ScalarFn::Custom { .. } => None,
    }
}

/// `alpha1^{-1}((2/delta) lambda^k(alpha2(r)))`, in log space when `alpha_v` is linear
/// so that large plateaus do not overflow.
fn beta1_value(lyap: &LyapunovCertificate, lam: &Lambda<'_>, delta: f64, r: f64, k: u64) -> Result<f64> {
    if let Some(a) = lam.linear {
        if r > 0.0 {
            if let Some(l2) = ln_eval(&lyap.alpha2, r) {
                let l = l2 + k as f64 * (1.0 - a / 4.0).ln() + (2.0 / delta).ln();
                if let Some(v) = inv_from_ln(&lyap.alpha1, l) {
                    return Ok(v);
                }
            }
        }
    }
    alpha1_inv(lyap, delta, lam.pow(lyap.alpha2.eval(r), k))
}

/// Sliding-window maximum of `e[lo..=hi]` for non-decreasing `lo` and `hi`.
struct WindowMax<'a> {
    e: &'a [f64],
    q: VecDeque<usize>,
    next: usize,
}

impl<'a> WindowMax<'a> {
    fn new(e: &'a [f64]) -> Self {
        Self { e, q: VecDeque::new(), next: 0 }
    }

    fn query(&mut self, lo: usize, hi: usize) -> f64 {
        while self.next <= hi {
            let v = self.e[self.next];
            while self.q.back().is_some_and(|&j| self.e[j] <= v) {
                self.q.pop_back();
            }
            self.q.push_back(self.next);
            self.next += 1;
        }
        while self.q.front().is_some_and(|&j| j < lo) {
            self.q.pop_front();
        }
        self.q.front().map_or(0.0, |&j| self.e[j])
    }
}

impl StabilityEnvelope {
    /// Build the envelope from `T0`, the plateau `x_bar(T0 + 1, delta/6)` and
    /// `e_window[j] = e(T0 + j, delta/2)` for `j = 0..=window + 1`.
    pub fn construct(
        delta: f64,
        lyap: &LyapunovCertificate,
        t0: u64,
        plateau: f64,
        e_window: &[f64],
        opts: EnvelopeOptions,
    ) -> Result<Self> {
        check_delta(delta)?;
        let k_max = opts.window;
        if e_window.len() as u64 != k_max + 2 {
            return Err(contract(format!("expected {} error values, got {}", k_max + 2, e_window.len())));
        }
        if e_window.iter().any(|e| !(*e >= 0.0)) {
            return Err(contract("error values must be non-negative"));
        }
        let lam = lambda_of(lyap, opts.lambda_grid);
        let exponent = |k: u64| {
            let half = k.div_ceil(2);
            match opts.lambda_exponent {
                LambdaExponent::HalfElapsed => half,
                LambdaExponent::Printed => t0 + 1 + half,
            }
        };
        let big_k = k_max + 1;
        let v1 = lyap.alpha2.eval(plateau);
        let v2 = gamma_tilde(lyap, 2.0 * lyap.d_tilde)?;
        let (orbit1, orbit2) = if lam.linear.is_none() {
            (Some(lam.orbit(v1, big_k)), Some(lam.orbit(v2, exponent(big_k))))
        } else {
            (None, None)
        };
        let pow_cached = |orbit: &Option<Vec<f64>>, v: f64, k: u64| match orbit {
            Some(o) => o.get(k as usize).copied().unwrap_or(0.0),
            None => lam.pow(v, k),
        };

        let mut head = WindowMax::new(e_window);
        let mut tail = WindowMax::new(e_window);
        let mut eta_tilde_post = Vec::with_capacity(big_k as usize + 1);
        let mut m2_cache: Option<(f64, Vec<f64>)> = None;
        for k in 0..=big_k {
            let j = exponent(k);
            let half = (k / 2) as usize;
            let beta1 = match &orbit1 {
                Some(o) => alpha1_inv(lyap, delta, o.get(k as usize).copied().unwrap_or(0.0))?,
                None => beta1_value(lyap, &lam, delta, plateau, k)?,
            };
            let eta2 = alpha1_inv(lyap, delta, pow_cached(&orbit2, v2, j))?;
            let m2 = head.query(0, half);
            let start2 = gamma_tilde(lyap, 2.0 * lyap.sigma3.eval(m2))?;
            let lam2 = if lam.linear.is_some() {
                lam.pow(start2, j)
            } else {
                if m2_cache.as_ref().is_none_or(|(m, _)| *m != m2) {
                    m2_cache = Some((m2, lam.orbit(start2, exponent(big_k))));
                }
                m2_cache.as_ref().map_or(0.0, |(_, o)| o.get(j as usize).copied().unwrap_or(0.0))
            };
            let beta2 = alpha1_inv(lyap, delta, lam2)?;
            let m3 = if k == 0 { 0.0 } else { tail.query(half + 1, k as usize) };
            let gamma3 = alpha1_inv(lyap, delta, gamma_tilde(lyap, 2.0 * lyap.sigma3.eval(m3))?)?;
            eta_tilde_post.push(beta1.max(eta2 + beta2).max(gamma3));
        }
        let mut eta_post = eta_tilde_post.clone();
        for i in (0..eta_post.len() - 1).rev() {
            eta_post[i] = eta_post[i].max(eta_post[i + 1]);
        }
        let eta_head = plateau.max(eta_post[0]);
        let mid = (k_max / 2) as usize;
        let tail_monotone_observed = e_window[mid..].windows(2).all(|w| w[1] <= w[0]);
        let c2 = alpha1_inv(lyap, delta, gamma_tilde(lyap, 2.0 * lyap.d_tilde)?)?;
        Ok(Self {
            delta,
            t0,
            plateau,
            c2,
            eta_tilde_post,
            eta_post,
            eta_head,
            tail_assumes_monotone_e: true,
            tail_monotone_observed,
            e_source: ErrorSource::Supplied,
            options: opts,
            lyap: Some(lyap.clone()),
        })
    }

    /// `eta(t)`, non-increasing in `t`.
    pub fn eta(&self, t: u64) -> f64 {
        if t <= self.t0 {
            return self.eta_head;
        }
        let k = ((t - self.t0 - 1) as usize).min(self.eta_post.len() - 1);
        self.eta_post[k]
    }

    /// `eta_tilde(t)` inside the evaluated range; `None` past it.
    pub fn eta_tilde(&self, t: u64) -> Option<f64> {
        if t <= self.t0 {
            return Some(self.plateau);
        }
        self.eta_tilde_post.get((t - self.t0 - 1) as usize).copied()
    }

    fn cert(&self) -> Result<&LyapunovCertificate> {
        self.lyap.as_ref().ok_or_else(|| Error::Missing("Lyapunov certificate (envelope was deserialised)".into()))
    }

    pub fn lambda1(&self, r: f64) -> Result<f64> {
        Ok(lambda_of(self.cert()?, self.options.lambda_grid).lambda1(r))
    }

    pub fn lambda(&self, r: f64) -> Result<f64> {
        Ok(lambda_of(self.cert()?, self.options.lambda_grid).lambda(r))
    }

    /// `lambda^k(v)`.
    pub fn lambda_pow(&self, v: f64, k: u64) -> Result<f64> {
        Ok(lambda_of(self.cert()?, self.options.lambda_grid).pow(v, k))
    }

    pub fn gamma_tilde(&self, r: f64) -> Result<f64> {
        gamma_tilde(self.cert()?, r)
    }

    pub fn beta1(&self, r: f64, k: u64) -> Result<f64> {
        let l = self.cert()?;
        beta1_value(l, &lambda_of(l, self.options.lambda_grid), self.delta, r, k)
    }

    fn exponent(&self, k: u64) -> u64 {
        match self.options.lambda_exponent {
            LambdaExponent::HalfElapsed => k.div_ceil(2),
            LambdaExponent::Printed => self.t0 + 1 + k.div_ceil(2),
        }
    }

    pub fn beta2(&self, r: f64, k: u64) -> Result<f64> {
        let l = self.cert()?;
        let v = gamma_tilde(l, 2.0 * l.sigma3.eval(r))?;
        alpha1_inv(l, self.delta, self.lambda_pow(v, self.exponent(k))?)
    }

    pub fn eta2(&self, k: u64) -> Result<f64> {
        let l = self.cert()?;
        let v = gamma_tilde(l, 2.0 * l.d_tilde)?;
        alpha1_inv(l, self.delta, self.lambda_pow(v, self.exponent(k))?)
    }

    pub fn gamma3(&self, r: f64) -> Result<f64> {
        let l = self.cert()?;
        alpha1_inv(l, self.delta, gamma_tilde(l, 2.0 * l.sigma3.eval(r))?)
    }
}

/// Envelope for a schedule whose `delta / 2` condition holds, with `T0 = T_converge(delta/2)`
/// (or its dyadic upper bound when the exact search hit the cap).
pub fn stability_envelope(
    p: &BoundProblem,
    schedule: &BoundSchedule,
    lyap: &LyapunovCertificate,
    opts: EnvelopeOptions,
) -> Result<StabilityEnvelope> {
    let (delta, x0) = (schedule.delta, schedule.x0);
    if !schedule.condition_half.holds {
        return Err(Error::NotCertified(format!(
            "condition at delta/2 = {} fails: {}",
            delta / 2.0,
            schedule.condition_half.reason.as_deref().unwrap_or("unknown")
        )));
    }
    let t0 = schedule
        .times_half
        .converge_bound()
        .ok_or_else(|| Error::NotCertified("no bound on T_converge at delta/2".into()))?;
    let ex = p.excitation()?;
    let d6 = delta / 6.0;
    let plateau = state_bound_raw((t0 + 1) as f64, d6, x0, &p.cfs, p.u_max, p.sigma_w, p.n);
    let last = t0
        .checked_add(opts.window + 1)
        .ok_or_else(|| contract("envelope window overflows the time index"))?;
    let (e_window, source): (Vec<f64>, _) = if last <= opts.exact_sum_limit {
        let sums = PrefixSums::new(p, d6, x0, last);
        let e = (0..=opts.window + 1)
            .map(|j| {
                let t = t0 + j;
                error_from_beta(t as f64, delta / 2.0, sums.get(t) + p.gamma, p, ex)
            })
            .collect();
        (e, ErrorSource::ExactSum)
    } else {
        let e = (0..=opts.window + 1)
            .map(|j| {
                let t = (t0 + j) as f64;
                let z = regressor_bound_raw(t, d6, x0, &p.cfs, p.u_max, p.sigma_w, p.n);
                error_from_beta(t, delta / 2.0, t * z * z + p.gamma, p, ex)
            })
            .collect();
        (e, ErrorSource::UpperBound)
    };
    let mut env = StabilityEnvelope::construct(delta, lyap, t0, plateau, &e_window, opts)?;
    env.e_source = source;
    Ok(env)
}
