//! Monotone scalar functions on `[0, inf)` used as comparison functions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// A monotone scalar callable with an inverse.
///
/// The closed-form variants serialise to JSON; `Custom` carries an arbitrary
/// closure and is inverted numerically.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    /// `slope * r`
    Linear { slope: f64 },
    /// `scale * (exp(rate * r) - 1)`
    ExpM1 { scale: f64, rate: f64 },
    /// `coeff * r^exponent`
    Power { coeff: f64, exponent: f64 },
    #[serde(skip)]
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { slope } => write!(f, "Linear({slope})"),
            Self::ExpM1 { scale, rate } => write!(f, "ExpM1(scale={scale}, rate={rate})"),
            Self::Power { coeff, exponent } => write!(f, "Power({coeff}*r^{exponent})"),
            Self::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl ScalarFn {
    pub fn identity() -> Self {
        Self::Linear { slope: 1.0 }
    }

    pub fn linear(slope: f64) -> Self {
        Self::Linear { slope }
    }

    pub fn exp_m1(scale: f64, rate: f64) -> Self {
        Self::ExpM1 { scale, rate }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom { name: name.into(), f: Arc::new(f) }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Self::Linear { slope } => slope * r,
            Self::ExpM1 { scale, rate } => scale * (rate * r).exp_m1(),
            Self::Power { coeff, exponent } => coeff * r.powf(*exponent),
            Self::Custom { f, .. } => f(r),
        }
    }

    /// Inverse on `[0, inf)`; `inf` maps to `inf`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if y.is_nan() {
            return Err(Error::Numeric("inverse of NaN".into()));
        }
        if y == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        match self {
            Self::Linear { slope } if *slope > 0.0 => Ok(y / slope),
            Self::ExpM1 { scale, rate } if *scale > 0.0 && *rate > 0.0 => Ok((y / scale).ln_1p() / rate),
            Self::Power { coeff, exponent } if *coeff > 0.0 && *exponent > 0.0 => {
                Ok((y / coeff).powf(1.0 / exponent))
            }
            Self::Custom { f, .. } => {
                let mut hi = 1.0;
                let mut guard = 0;
                while f(hi) < y {
                    hi *= 2.0;
                    guard += 1;
                    if guard > 2000 || !hi.is_finite() {
                        return Err(Error::Numeric(format!("could not bracket inverse at {y}")));
                    }
                }
                numeric_inverse(|r| f(r), y, (0.0, hi))
            }
            other => Err(contract(format!("{other:?} is not invertible"))),
        }
    }

    /// Whether this is `slope * r` (enables closed-form iteration).
    pub fn as_linear(&self) -> Option<f64> {
        match self {
            Self::Linear { slope } => Some(*slope),
            _ => None,
        }
    }
}

/// Bisection inverse of a strictly increasing `f` on `bracket`.
///
/// Stops once `|f(x) - y| <= 1e-10 (1 + |y|)` or after 200 halvings.
pub fn numeric_inverse(f: impl Fn(f64) -> f64, y: f64, bracket: (f64, f64)) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    let (flo, fhi) = (f(lo), f(hi));
    if !(lo <= hi) || !(flo <= y && y <= fhi) {
        return Err(contract(format!(
            "bracket violation: f({lo})={flo}, f({hi})={fhi}, target {y}"
        )));
    }
    let tol = 1e-10 * (1.0 + y.abs());
    if (flo - y).abs() <= tol {
        return Ok(lo);
    }
    if (fhi - y).abs() <= tol {
        return Ok(hi);
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm - y).abs() <= tol {
            return Ok(mid);
        }
        if fm < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Log-spaced grid of `count` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Sampled check that `f` is zero at zero, strictly increasing, and round-trips through its inverse.
pub fn check_class_k_inf(f: &ScalarFn, grid: &[f64]) -> std::result::Result<(), String> {
    if f.eval(0.0) != 0.0 {
        return Err(format!("{f:?}: value at 0 is {}", f.eval(0.0)));
    }
    let mut prev = 0.0;
    for &r in grid {
        let v = f.eval(r);
        if !(v > prev) {
            return Err(format!("{f:?}: not strictly increasing at {r}"));
        }
        prev = v;
        if v.is_finite() {
            let back = f.inverse(v).map_err(|e| e.to_string())?;
            let round = f.eval(back);
            if (round - v).abs() > 1e-9 * (1.0 + v) {
                return Err(format!("{f:?}: inverse round-trip off at {r}"));
            }
        }
    }
    Ok(())
}
