use std::f64::consts::{LN_2, PI};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{check_delta, error_from_beta, regressor_bound_raw, state_bound_raw, BoundProblem, ExcitationConstants};
use crate::error::{contract, Result};

/// Largest dyadic exponent examined by the beyond-cap bounds (`t < 2^62`).
pub const DYADIC_LIMIT_EXP: u32 = 61;

/// Outcome of a capped search for a time defined by a "for all t >= T" predicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SearchOutcome {
    Found { t: u64 },
    NotFound { cap: u64, slack_at_cap: f64 },
}

impl SearchOutcome {
    pub fn found(&self) -> Option<u64> {
        match self {
            Self::Found { t } => Some(*t),
            Self::NotFound { .. } => None,
        }
    }
}

impl fmt::Display for SearchOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Found { t } => write!(f, "{t}"),
            Self::NotFound { cap, .. } => write!(f, ">{cap}"),
        }
    }
}

/// A time that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(u64),
    Infinite,
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(t) => write!(f, "{t}"),
            Self::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Horizon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(t) => s.serialize_u64(*t),
            Self::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(t) => Ok(Self::Finite(t)),
            Raw::S(s) if s == "inf" => Ok(Self::Infinite),
            Raw::S(s) => Err(serde::de::Error::custom(format!("expected a count or \"inf\", got {s}"))),
        }
    }
}

/// `S(t) = sum_{i<=t} z_bar(i, delta')^2` for `t = 0..=len`.
#[derive(Debug, Clone)]
pub struct PrefixSums {
    pub delta: f64,
    sums: Vec<f64>,
}

impl PrefixSums {
    pub fn new(p: &BoundProblem, delta: f64, x0: f64, len: u64) -> Self {
        let mut sums = Vec::with_capacity(len as usize + 1);
        sums.push(0.0);
        let mut acc = 0.0;
        for i in 1..=len {
            let z = regressor_bound_raw(i as f64, delta, x0, &p.cfs, p.u_max, p.sigma_w, p.n);
            acc += z * z;
            sums.push(acc);
        }
        Self { delta, sums }
    }

    pub fn len(&self) -> u64 {
        (self.sums.len() - 1) as u64
    }

    pub fn is_empty(&self) -> bool {
        self.sums.len() <= 1
    }

    pub fn get(&self, t: u64) -> f64 {
        self.sums[t as usize]
    }
}

fn burn_in_scale(ex: ExcitationConstants) -> f64 {
    2.0 / ((1.0 - LN_2) * ex.p_pe)
}

/// `K d ln(1 + 16 S(t) / (c p (t-1))) + 1`; infinite at `t = 1`.
fn burn_in_head(t: u64, s: f64, d: usize, ex: ExcitationConstants) -> f64 {
    if t <= 1 {
        return f64::INFINITY;
    }
    let cp = ex.c_pe * ex.p_pe;
    burn_in_scale(ex) * d as f64 * (16.0 * s / (cp * (t - 1) as f64)).ln_1p() + 1.0
}

fn burn_in_tail(t: u64, big_t: u64, delta: f64, ex: ExcitationConstants) -> f64 {
    let k = (t - big_t + 1) as f64;
    burn_in_scale(ex) * (PI * PI * k * k / (2.0 * delta)).ln()
}

fn burn_in_slack(t: u64, big_t: u64, s: f64, delta: f64, d: usize, ex: ExcitationConstants) -> f64 {
    t as f64 - burn_in_head(t, s, d, ex) - burn_in_tail(t, big_t, delta, ex)
}

/// Smallest `T <= cap` with `t >= RHS(t, T)` for every `t` in `[T, cap]` and slack
/// increasing at the cap. `sums` must hold `z_bar(., delta/3)` prefix sums up to `cap`.
pub fn burn_in_time(p: &BoundProblem, delta: f64, sums: &PrefixSums, cap: u64) -> Result<SearchOutcome> {
    check_delta(delta)?;
    let ex = p.excitation()?;
    if cap < 2 || sums.len() < cap {
        return Err(contract("burn-in search needs cap >= 2 and prefix sums up to the cap"));
    }
    let holds = |big_t: u64| (big_t..=cap).all(|t| burn_in_slack(t, big_t, sums.get(t), delta, p.d, ex) >= 0.0);
    let not_found = SearchOutcome::NotFound {
        cap,
        slack_at_cap: burn_in_slack(cap, cap, sums.get(cap), delta, p.d, ex),
    };
    if !holds(cap) {
        return Ok(not_found);
    }
    let (mut lo, mut hi) = (1u64, cap);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo >= cap {
        return Ok(not_found);
    }
    let now = burn_in_slack(cap, lo, sums.get(cap), delta, p.d, ex);
    let before = burn_in_slack(cap - 1, lo, sums.get(cap - 1), delta, p.d, ex);
    Ok(if now > before { SearchOutcome::Found { t: lo } } else { not_found })
}

/// `max(T_burn-in, inf { T : e(t) <= vartheta_bar for all t in [T, cap] })` with an
/// eventual-decrease witness `e(cap) <= e(cap - 1)`.
pub fn converge_time(p: &BoundProblem, delta: f64, sums: &PrefixSums, cap: u64) -> Result<SearchOutcome> {
    let burn = burn_in_time(p, delta, sums, cap)?;
    converge_after(p, delta, sums, cap, burn)
}

pub(crate) fn converge_after(
    p: &BoundProblem,
    delta: f64,
    sums: &PrefixSums,
    cap: u64,
    burn: SearchOutcome,
) -> Result<SearchOutcome> {
    let ex = p.excitation()?;
    let e = |t: u64| error_from_beta(t as f64, delta, sums.get(t) + p.gamma, p, ex);
    let e_cap = e(cap);
    let not_found = SearchOutcome::NotFound { cap, slack_at_cap: p.vartheta_bar - e_cap };
    if e_cap > p.vartheta_bar || e_cap > e(cap - 1) {
        return Ok(not_found);
    }
    let mut t_e = 1;
    for t in (1..=cap).rev() {
        if e(t) > p.vartheta_bar {
            t_e = t + 1;
            break;
        }
    }
    Ok(match burn {
        SearchOutcome::Found { t } => SearchOutcome::Found { t: t.max(t_e) },
        nf => nf,
    })
}

/// `sup { T : x_bar(T, delta/3) <= r }` with `r` the inner radius of the invariant set.
///
/// Returns `Finite(0)` when even `x_bar(1)` exceeds the radius, and `Finite(2^62)`
/// as a lower bound when the search runs past that.
pub fn contained_time(p: &BoundProblem, delta: f64, x0: f64) -> Result<Horizon> {
    check_delta(delta)?;
    let r = match p.rpi_radius {
        None => return Ok(Horizon::Infinite),
        Some(r) => r,
    };
    let xb = |t: u64| state_bound_raw(t as f64, delta / 3.0, x0, &p.cfs, p.u_max, p.sigma_w, p.n);
    if xb(1) > r {
        return Ok(Horizon::Finite(0));
    }
    let limit = 1u64 << (DYADIC_LIMIT_EXP + 1);
    let mut hi = 2u64;
    while xb(hi) <= r {
        if hi >= limit {
            return Ok(Horizon::Finite(limit));
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    // Invariant: xb(lo) <= r < xb(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if xb(mid) <= r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Horizon::Finite(lo))
}

fn pow2(j: u32) -> f64 {
    (2.0f64).powi(j as i32)
}

/// Upper bound on the burn-in time valid past any cap.
///
/// On each dyadic block `[2^j, 2^{j+1}]` the prefix sum is bounded by
/// `2^{j+1} z_bar(2^{j+1})^2` (z_bar is non-decreasing) and the remaining terms by their
/// block maxima. Returns `2^{j0}` for the smallest `j0` such that every block up to
/// `2^62` passes and the block slack is increasing at the last block.
pub fn dyadic_burn_in_upper(p: &BoundProblem, delta: f64, x0: f64) -> Result<Option<u64>> {
    check_delta(delta)?;
    let ex = p.excitation()?;
    let cp = ex.c_pe * ex.p_pe;
    let k = burn_in_scale(ex);
    let slack = |j: u32| {
        let top = pow2(j + 1);
        let z = regressor_bound_raw(top, delta / 3.0, x0, &p.cfs, p.u_max, p.sigma_w, p.n);
        let head = k * p.d as f64 * (16.0 * top * z * z / (cp * (pow2(j) - 1.0))).ln_1p() + 1.0;
        let tail = k * (PI * PI * top * top / (2.0 * delta)).ln();
        pow2(j) - head - tail
    };
    if slack(DYADIC_LIMIT_EXP) <= slack(DYADIC_LIMIT_EXP - 1) {
        return Ok(None);
    }
    let mut j0 = None;
    for j in (1..=DYADIC_LIMIT_EXP).rev() {
        if slack(j) >= 0.0 {
            j0 = Some(j);
        } else {
            break;
        }
    }
    Ok(j0.map(|j| 1u64 << j))
}

/// Upper bound on the convergence time valid past any cap, by the same dyadic blocking
/// applied to `e(t)`.
pub fn dyadic_converge_upper(p: &BoundProblem, delta: f64, x0: f64) -> Result<Option<u64>> {
    let burn = match dyadic_burn_in_upper(p, delta, x0)? {
        Some(b) => b,
        None => return Ok(None),
    };
    let ex = p.excitation()?;
    let e_block = |j: u32| {
        let top = pow2(j + 1);
        let z = regressor_bound_raw(top, delta / 3.0, x0, &p.cfs, p.u_max, p.sigma_w, p.n);
        // error_from_beta evaluated with the block's worst numerator and best denominator.
        error_from_beta(pow2(j), delta, top * z * z + p.gamma, p, ex)
    };
    if e_block(DYADIC_LIMIT_EXP) > e_block(DYADIC_LIMIT_EXP - 1) {
        return Ok(None);
    }
    let mut j1 = None;
    for j in (0..=DYADIC_LIMIT_EXP).rev() {
        if e_block(j) <= p.vartheta_bar {
            j1 = Some(j);
        } else {
            break;
        }
    }
    Ok(j1.map(|j| burn.max(1u64 << j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{build_pwa, PwaExampleParams};

    fn pwa_problem() -> BoundProblem {
        let b = build_pwa(&PwaExampleParams { h_samples: 20_000, lipschitz_samples: 5_000, ..Default::default() }).unwrap();
        b.bound_problem()
    }

    /// `e` with `beta_max(t) <= t z_bar(t)^2 + gamma`, valid at any real `t`.
    fn e_upper(p: &BoundProblem, t: f64, delta: f64, x0: f64) -> f64 {
        let z = regressor_bound_raw(t, delta / 3.0, x0, &p.cfs, p.u_max, p.sigma_w, p.n);
        error_from_beta(t, delta, t * z * z + p.gamma, p, p.excitation().unwrap())
    }

    #[test]
    fn default_pwa_convergence_lies_past_the_dyadic_range() {
        let p = pwa_problem();
        let delta = 0.1;
        assert_eq!(dyadic_burn_in_upper(&p, delta, 0.5).unwrap(), Some(1 << 36));
        assert_eq!(dyadic_converge_upper(&p, delta, 0.5).unwrap(), None);
        // Still finite: the upper envelope drops below vartheta_bar and keeps falling.
        assert!(e_upper(&p, 2f64.powi(62), delta, 0.5) > p.vartheta_bar);
        let ts: Vec<f64> = (0..=40).map(|i| 1e20 * 10f64.powf(i as f64 / 40.0)).collect();
        let es: Vec<f64> = ts.iter().map(|&t| e_upper(&p, t, delta, 0.5)).collect();
        assert!(es.windows(2).all(|w| w[1] < w[0]));
        assert!(*es.last().unwrap() < p.vartheta_bar);
    }
}
