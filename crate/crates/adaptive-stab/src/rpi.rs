//! Falsification search for robust positive invariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::linalg::{serde_rows, serde_vec, spectral_norm};
use crate::model::{step, PolicyFamily, SystemModel};
use crate::noise::NoiseModel;
use crate::region::RegionDescriptor;
use crate::rng::{substream, Stream};

/// A sampled tuple whose successor leaves the region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    #[serde(with = "serde_vec")]
    pub x: DVector<f64>,
    #[serde(with = "serde_vec")]
    pub s: DVector<f64>,
    #[serde(with = "serde_vec")]
    pub w: DVector<f64>,
    #[serde(with = "serde_rows")]
    pub theta: DMatrix<f64>,
    #[serde(with = "serde_vec")]
    pub next: DVector<f64>,
}

/// Gaussian supports are cut at this tail probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub delta: f64,
    pub noise_z: f64,
    pub dither_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpiCertificate {
    pub region: RegionDescriptor,
    pub vartheta_bar: f64,
    pub samples_checked: usize,
    pub falsified: Option<Counterexample>,
    pub truncation: Option<Truncation>,
}

impl RpiCertificate {
    /// The global case: the region is the whole state space.
    pub fn global(vartheta_bar: f64) -> Self {
        Self { region: RegionDescriptor::All, vartheta_bar, samples_checked: 0, falsified: None, truncation: None }
    }
}

#[derive(Debug, Clone)]
pub struct RpiOptions {
    pub sample_budget: usize,
    pub seed: u64,
    /// Tail probability for truncating unbounded noise; `None` forbids unbounded noise.
    pub truncation_delta: Option<f64>,
    /// Radius used in place of an unbounded region.
    pub scan_cap: Option<f64>,
}

impl Default for RpiOptions {
    fn default() -> Self {
        Self { sample_budget: 20_000, seed: 0, truncation_delta: Some(1e-6), scan_cap: None }
    }
}

fn corners(factor: &DMatrix<f64>, z: f64) -> Vec<DVector<f64>> {
    let k = factor.ncols();
    let mut out = vec![DVector::zeros(factor.nrows())];
    if z == 0.0 || k > 12 {
        return out;
    }
    for mask in 0..(1usize << k) {
        let v = DVector::from_iterator(k, (0..k).map(|i| if mask >> i & 1 == 1 { z } else { -z }));
        out.push(factor * v);
    }
    out
}

fn interior<R: Rng>(factor: &DMatrix<f64>, z: f64, rng: &mut R) -> DVector<f64> {
    let k = factor.ncols();
    factor * DVector::from_iterator(k, (0..k).map(|_| z * (2.0 * rng.random::<f64>() - 1.0)))
}

fn truncate(noise: &NoiseModel, delta: Option<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    if noise.is_bounded() {
        return Ok(noise.truncation(0.0));
    }
    match delta {
        Some(dl) if dl > 0.0 && dl < 1.0 => Ok(noise.truncation(dl)),
        _ => Err(contract(format!("{what} is unbounded and no truncation level was given"))),
    }
}

/// Corner enumeration plus random interior sampling of
/// `(x, s, w, theta)` in `region x S x W x B(theta*, vartheta_bar)`.
///
/// A clean pass means "not falsified" with the recorded budget, never a proof.
pub fn rpi_check(
    sys: &SystemModel,
    policy: &PolicyFamily,
    region: &RegionDescriptor,
    vartheta_bar: f64,
    opts: &RpiOptions,
) -> Result<RpiCertificate> {
    if !(vartheta_bar >= 0.0) {
        return Err(contract("vartheta_bar must be non-negative"));
    }
    let (fw, zw) = truncate(&sys.process_noise, opts.truncation_delta, "process noise")?;
    let (fs, zs) = truncate(&policy.dither, opts.truncation_delta, "dither")?;
    let truncation = (!sys.process_noise.is_bounded() || !policy.dither.is_bounded()).then(|| Truncation {
        delta: opts.truncation_delta.unwrap_or(0.0),
        noise_z: zw,
        dither_z: zs,
    });
    let (lows, highs) = match (region.bounding_box(), opts.scan_cap) {
        (Some(b), _) => b,
        (None, Some(cap)) => (vec![-cap; sys.n], vec![cap; sys.n]),
        (None, None) => return Err(contract("unbounded region needs a scan cap")),
    };
    let w_mean = sys.process_noise.mean();
    let s_mean = policy.dither.mean();
    let theta_star = sys.theta_star();
    let (d, n) = theta_star.shape();

    let x_corners: Vec<DVector<f64>> = {
        let mut v = vec![DVector::from_iterator(n, lows.iter().zip(&highs).map(|(l, h)| 0.5 * (l + h)))];
        if n <= 12 {
            for mask in 0..(1usize << n) {
                v.push(DVector::from_iterator(
                    n,
                    (0..n).map(|i| if mask >> i & 1 == 1 { highs[i] } else { lows[i] }),
                ));
            }
        }
        v.into_iter().filter(|x| region.contains(x)).collect()
    };
    let w_corners: Vec<DVector<f64>> = corners(&fw, zw).into_iter().map(|w| w + &w_mean).collect();
    let s_corners: Vec<DVector<f64>> = corners(&fs, zs).into_iter().map(|s| s + &s_mean).collect();
    let mut th_corners = vec![theta_star.clone()];
    for i in 0..d {
        for j in 0..n {
            for sign in [-1.0, 1.0] {
                let mut t = theta_star.clone();
                t[(i, j)] += sign * vartheta_bar;
                th_corners.push(t);
            }
        }
    }

    let mut checked = 0usize;
    let check = |x: &DVector<f64>, s: &DVector<f64>, w: &DVector<f64>, th: &DMatrix<f64>| -> Result<Option<Counterexample>> {
        let u = policy.apply(x, s, th);
        let next = step(sys, x, &u, w)?;
        Ok((!region.contains(&next)).then(|| Counterexample {
            x: x.clone(),
            s: s.clone(),
            w: w.clone(),
            theta: th.clone(),
            next,
        }))
    };

    let corner_budget = opts.sample_budget / 2;
    'outer: for th in &th_corners {
        for x in &x_corners {
            for s in &s_corners {
                for w in &w_corners {
                    if checked >= corner_budget {
                        break 'outer;
                    }
                    checked += 1;
                    if let Some(ce) = check(x, s, w, th)? {
                        return Ok(RpiCertificate {
                            region: region.clone(),
                            vartheta_bar,
                            samples_checked: checked,
                            falsified: Some(ce),
                            truncation,
                        });
                    }
                }
            }
        }
    }

    let mut rng = substream(opts.seed, 0, 0, Stream::Scan);
    while checked < opts.sample_budget {
        let x = DVector::from_iterator(n, (0..n).map(|i| lows[i] + (highs[i] - lows[i]) * rng.random::<f64>()));
        if !region.contains(&x) {
            checked += 1;
            continue;
        }
        let w = interior(&fw, zw, &mut rng) + &w_mean;
        let s = interior(&fs, zs, &mut rng) + &s_mean;
        let g = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gn = spectral_norm(&g);
        let th = if gn > 0.0 {
            theta_star + g * (vartheta_bar * rng.random::<f64>() / gn)
        } else {
            theta_star.clone()
        };
        checked += 1;
        if let Some(ce) = check(&x, &s, &w, &th)? {
            return Ok(RpiCertificate {
                region: region.clone(),
                vartheta_bar,
                samples_checked: checked,
                falsified: Some(ce),
                truncation,
            });
        }
    }
    Ok(RpiCertificate { region: region.clone(), vartheta_bar, samples_checked: checked, falsified: None, truncation })
}
