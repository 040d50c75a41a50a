//! Excitation constants: the closed-form map from moment bounds and a
//! Monte-Carlo scan that estimates those moments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::model::{PolicyFamily, SystemModel};
use crate::region::RegionDescriptor;
use crate::rng::{substream, Stream};

/// How a certificate's moment bounds were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub source: String,
    pub x_points: usize,
    pub theta_samples: usize,
    pub zeta_directions: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub c_pe1_se: f64,
    pub c_pe2_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationCertificate {
    pub region: RegionDescriptor,
    pub c_pe1: f64,
    pub c_pe2: f64,
    pub c_pe: f64,
    pub p_pe: f64,
    pub mc_config: Option<ScanRecord>,
}

/// `c_PE = c1^2 / 4`, `p_PE = (1/4) / (c2 / c1^2 + 1)`.
pub fn excitation_from_moments(c_pe1: f64, c_pe2: f64) -> Result<ExcitationCertificate> {
    if !(c_pe1 > 0.0) || !c_pe1.is_finite() {
        return Err(contract(format!("first-moment bound must be positive, got {c_pe1}")));
    }
    if !(c_pe2 >= 0.0) || !c_pe2.is_finite() {
        return Err(contract(format!("variance bound must be non-negative, got {c_pe2}")));
    }
    let sq = c_pe1 * c_pe1;
    Ok(ExcitationCertificate {
        region: RegionDescriptor::All,
        c_pe1,
        c_pe2,
        c_pe: sq / 4.0,
        p_pe: 0.25 / (c_pe2 / sq + 1.0),
        mc_config: None,
    })
}

/// Scan settings for [`moment_scan`].
#[derive(Debug, Clone)]
pub struct MomentScanOptions {
    /// State grid size (per axis in one dimension, total otherwise).
    pub x_points: usize,
    pub theta_samples: Vec<DMatrix<f64>>,
    pub zeta_directions: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// Radius used in place of an unbounded region.
    pub scan_cap: Option<f64>,
}

/// Result of a moment scan with standard errors and the extremal cells.
#[derive(Debug, Clone, Serialize)]
pub struct MomentScan {
    pub c_pe1: f64,
    pub c_pe1_se: f64,
    pub c_pe2: f64,
    pub c_pe2_se: f64,
    pub argmin_x: Vec<f64>,
    pub argmin_zeta: Vec<f64>,
    pub argmin_theta: Vec<f64>,
    pub cells: usize,
}

impl MomentScan {
    pub fn record(&self, opts: &MomentScanOptions) -> ScanRecord {
        ScanRecord {
            source: "monte_carlo".into(),
            x_points: opts.x_points,
            theta_samples: opts.theta_samples.len(),
            zeta_directions: opts.zeta_directions,
            mc_samples: opts.mc_samples,
            seed: opts.seed,
            c_pe1_se: self.c_pe1_se,
            c_pe2_se: self.c_pe2_se,
        }
    }
}

fn halton(index: usize, base: usize) -> f64 {
    let (mut f, mut r, mut i) = (1.0, 0.0, index);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Quasi-random points of a box, always including its centre.
pub(crate) fn box_points(lows: &[f64], highs: &[f64], count: usize) -> Vec<DVector<f64>> {
    let n = lows.len();
    if n == 1 {
        let k = count.max(2);
        return (0..k)
            .map(|i| DVector::from_element(1, lows[0] + (highs[0] - lows[0]) * i as f64 / (k - 1) as f64))
            .chain(std::iter::once(DVector::from_element(1, 0.5 * (lows[0] + highs[0]))))
            .collect();
    }
    let mut pts = vec![DVector::from_iterator(n, lows.iter().zip(highs).map(|(l, h)| 0.5 * (l + h)))];
    for i in 1..count.max(1) {
        pts.push(DVector::from_iterator(
            n,
            (0..n).map(|j| lows[j] + (highs[j] - lows[j]) * halton(i, PRIMES[j % PRIMES.len()])),
        ));
    }
    pts
}

/// Unit directions: a uniform half-circle grid in two dimensions, axes plus
/// Gaussian draws otherwise.
pub(crate) fn zeta_directions(d: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    match d {
        1 => vec![DVector::from_element(1, 1.0)],
        2 => (0..count.max(1))
            .map(|i| {
                let a = std::f64::consts::PI * i as f64 / count.max(1) as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        _ => {
            let mut dirs: Vec<DVector<f64>> = (0..d)
                .map(|i| {
                    let mut e = DVector::zeros(d);
                    e[i] = 1.0;
                    e
                })
                .collect();
            let mut rng = substream(seed, u64::MAX, 0, Stream::Scan);
            while dirs.len() < count.max(d) {
                let g = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let nrm = g.norm();
                if nrm > 1e-12 {
                    dirs.push(g / nrm);
                }
            }
            dirs
        }
    }
}

/// Parameter samples: zero plus random directions at log-spaced Frobenius radii.
pub fn theta_grid(d: usize, n: usize, radii: &[f64], per_radius: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut out = vec![DMatrix::zeros(d, n)];
    let mut rng = substream(seed, u64::MAX - 1, 0, Stream::Scan);
    for &r in radii {
        for _ in 0..per_radius {
            let g = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let nrm = g.norm();
            if nrm > 1e-12 {
                out.push(g * (r / nrm));
            }
        }
    }
    out
}

struct CellStats {
    min_mean: f64,
    min_se: f64,
    min_zeta: Vec<f64>,
    max_var: f64,
    max_var_se: f64,
    rms_psi: f64,
}

/// Mean and standard error of `|zeta^T psi|` over the stored rows.
fn abs_moment(psi: &[f64], z: &[f64]) -> (f64, f64, f64) {
    let d = z.len();
    let nf = (psi.len() / d) as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for row in psi.chunks_exact(d) {
        let v = row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>().abs();
        s1 += v;
        s2 += v * v;
    }
    let mean = s1 / nf;
    let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    (mean, (var / nf).sqrt(), var)
}

/// Golden-section search of `E|zeta(a)^T psi|` for `a` within `half_width` of `a0`.
fn refine_angle(psi: &[f64], a0: f64, half_width: f64) -> (f64, f64, Vec<f64>) {
    let dir = |a: f64| [a.cos(), a.sin()];
    let g = |a: f64| abs_moment(psi, &dir(a)).0;
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (a0 - half_width, a0 + half_width);
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..48 {
        if gc < gd {
            hi = d;
            d = c;
            gd = gc;
            c = hi - phi * (hi - lo);
            gc = g(c);
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + phi * (hi - lo);
            gd = g(d);
        }
    }
    let a = if gc < gd { c } else { d };
    let (mean, se, _) = abs_moment(psi, &dir(a));
    (mean, se, dir(a).to_vec())
}

fn scan_cell(
    sys: &SystemModel,
    policy: &PolicyFamily,
    x: &DVector<f64>,
    theta: &DMatrix<f64>,
    zetas: &[DVector<f64>],
    mc: usize,
    seed: u64,
    cell: u64,
) -> CellStats {
    let d = sys.d;
    let mut rng_w = substream(seed, cell, 0, Stream::Process);
    let mut rng_s = substream(seed, cell, 0, Stream::Dither);
    let mut psi: Vec<f64> = Vec::with_capacity(mc * d);
    for _ in 0..mc {
        let w = sys.process_noise.sample(&mut rng_w);
        let s = policy.dither.sample(&mut rng_s);
        let xw = x + w;
        let u = policy.apply(&xw, &s, theta);
        psi.extend(sys.psi(&xw, &u).iter());
    }
    let nf = mc as f64;
    let rms_psi = (psi.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();
    let mut st = CellStats {
        min_mean: f64::INFINITY,
        min_se: 0.0,
        min_zeta: Vec::new(),
        max_var: 0.0,
        max_var_se: 0.0,
        rms_psi,
    };
    let mut best = 0;
    for (k, z) in zetas.iter().enumerate() {
        let (mean, se, var) = abs_moment(&psi, z.as_slice());
        if mean < st.min_mean {
            st.min_mean = mean;
            st.min_se = se;
            best = k;
        }
        if var >= st.max_var {
            let vals = psi.chunks_exact(d).map(|row| row.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>().abs());
            let m4 = vals.map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
            st.max_var = var;
            st.max_var_se = ((m4 - var * var).max(0.0) / nf).sqrt();
        }
    }
    st.min_zeta = zetas[best].iter().copied().collect();
    if d == 2 && zetas.len() > 1 {
        let step = std::f64::consts::PI / zetas.len() as f64;
        let a0 = zetas[best][1].atan2(zetas[best][0]);
        let (mean, se, z) = refine_angle(&psi, a0, step);
        if mean < st.min_mean {
            st.min_mean = mean;
            st.min_se = se;
            st.min_zeta = z;
        }
    }
    st
}

/// First moments below this fraction of the RMS regressor norm count as zero.
pub const RELATIVE_ZERO: f64 = 1e-6;

/// Monte-Carlo estimate of `inf E|zeta^T psi(x+W, alpha(x+W, S, theta))|` and
/// `sup Var|...|` over a finite scan of `(x, theta, zeta)`.
pub fn moment_scan(
    sys: &SystemModel,
    policy: &PolicyFamily,
    region: &RegionDescriptor,
    opts: &MomentScanOptions,
) -> Result<MomentScan> {
    if opts.mc_samples < 1000 {
        return Err(contract("moment scan needs at least 1000 Monte-Carlo samples"));
    }
    if opts.theta_samples.is_empty() {
        return Err(contract("moment scan needs at least one parameter sample"));
    }
    let (lows, highs) = match (region.bounding_box(), opts.scan_cap) {
        (Some(b), _) => b,
        (None, Some(cap)) => (vec![-cap; sys.n], vec![cap; sys.n]),
        (None, None) => return Err(contract("unbounded region needs a scan cap")),
    };
    let xs: Vec<DVector<f64>> = box_points(&lows, &highs, opts.x_points)
        .into_iter()
        .filter(|x| region.contains(x) || !region.is_bounded())
        .collect();
    let zetas = zeta_directions(sys.d, opts.zeta_directions, opts.seed);
    let cells: Vec<(usize, usize)> =
        (0..xs.len()).flat_map(|i| (0..opts.theta_samples.len()).map(move |j| (i, j))).collect();
    let stats: Vec<CellStats> = cells
        .par_iter()
        .enumerate()
        .map(|(c, &(i, j))| {
            scan_cell(sys, policy, &xs[i], &opts.theta_samples[j], &zetas, opts.mc_samples, opts.seed, c as u64)
        })
        .collect();
    let (imin, smin) = stats
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.min_mean.total_cmp(&b.1.min_mean))
        .expect("at least one cell");
    let smax = stats.iter().max_by(|a, b| a.max_var.total_cmp(&b.max_var)).expect("at least one cell");
    let (xi, ti) = cells[imin];
    let scan = MomentScan {
        c_pe1: smin.min_mean,
        c_pe1_se: smin.min_se,
        c_pe2: smax.max_var,
        c_pe2_se: smax.max_var_se,
        argmin_x: xs[xi].iter().copied().collect(),
        argmin_zeta: smin.min_zeta.clone(),
        argmin_theta: opts.theta_samples[ti].iter().copied().collect(),
        cells: cells.len(),
    };
    if !(scan.c_pe1 > 3.0 * scan.c_pe1_se) {
        return Err(Error::NotCertified(format!(
            "excitation not certified: first moment {:.3e} is within 3 standard errors ({:.3e}) of zero",
            scan.c_pe1, scan.c_pe1_se
        )));
    }
    let scale = stats.iter().map(|s| s.rms_psi).fold(0.0, f64::max);
    if !(scan.c_pe1 > RELATIVE_ZERO * scale) {
        return Err(Error::NotCertified(format!(
            "excitation not certified: first moment {:.3e} is numerically zero against regressor scale {scale:.3e} at x = {:?}, zeta = {:?}",
            scan.c_pe1, scan.argmin_x, scan.argmin_zeta
        )));
    }
    Ok(scan)
}

/// Certificate from a completed scan.
pub fn certificate_from_scan(scan: &MomentScan, region: RegionDescriptor, opts: &MomentScanOptions) -> Result<ExcitationCertificate> {
    let mut cert = excitation_from_moments(scan.c_pe1, scan.c_pe2)?;
    cert.region = region;
    cert.mc_config = Some(scan.record(opts));
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_formulas() {
        let c = excitation_from_moments(2.0, 0.0).unwrap();
        assert_eq!((c.c_pe, c.p_pe), (1.0, 0.25));
        let c = excitation_from_moments(1.0, 3.0).unwrap();
        assert_eq!((c.c_pe, c.p_pe), (0.25, 1.0 / 16.0));
        assert!(excitation_from_moments(0.0, 1.0).is_err());
    }
}
