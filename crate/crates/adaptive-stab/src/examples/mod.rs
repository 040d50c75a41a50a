//! The two worked examples: a scalar piecewise-affine plant and a sub-sampled
//! input-constrained linear plant.

mod linear;
mod pwa;

pub use linear::{build_linear, LinearExampleParams};
pub use pwa::{build_pwa, PwaExampleParams};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundProblem, ComparisonFunctionSet, ExcitationConstants};
use crate::error::{Error, Result};
use crate::excitation::ExcitationCertificate;
use crate::lipschitz::LipschitzEstimate;
use crate::lyapunov::LyapunovCertificate;
use crate::model::{PolicyFamily, SystemModel};
use crate::noise::NoiseModel;
use crate::rng::{substream, Stream};
use crate::rpi::RpiCertificate;

/// Monte-Carlo estimate of `h = ln E[exp|R S|] + ln E[exp|W|]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HEstimate {
    pub h: f64,
    /// Delta-method standard error of `h`.
    pub se: f64,
    pub dither_term: f64,
    pub noise_term: f64,
    pub samples: usize,
}

impl HEstimate {
    /// `h + 3 se`, the value used in certificates.
    pub fn upper(&self) -> f64 {
        self.h + 3.0 * self.se
    }
}

fn log_mean_exp(values: impl Iterator<Item = f64>, n: usize) -> (f64, f64) {
    let (mut s1, mut s2) = (0.0, 0.0);
    for v in values {
        let e = v.exp();
        s1 += e;
        s2 += e * e;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = if n > 1 { ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0) } else { 0.0 };
    (mean.ln(), (var / nf).sqrt() / mean)
}

/// `ln E[exp|R S|] + ln E[exp|W|]` by Monte Carlo with a standard error.
pub fn compute_h(r_star: &DMatrix<f64>, dither: &NoiseModel, noise: &NoiseModel, mc_samples: usize, seed: u64) -> Result<HEstimate> {
    if mc_samples == 0 {
        return Err(crate::error::contract("compute_h needs at least one sample"));
    }
    if r_star.ncols() != dither.dim() {
        return Err(crate::error::contract("R has the wrong number of columns for the dither"));
    }
    let mut rs = substream(seed, 0, 0, Stream::Dither);
    let mut rw = substream(seed, 0, 0, Stream::Process);
    let (ds, dse) = log_mean_exp((0..mc_samples).map(|_| (r_star * dither.sample(&mut rs)).norm()), mc_samples);
    let (ws, wse) = log_mean_exp((0..mc_samples).map(|_| noise.sample(&mut rw).norm()), mc_samples);
    let h = ds + ws;
    let se = dse.hypot(wse);
    if !h.is_finite() || !se.is_finite() {
        return Err(Error::Numeric(format!("non-finite exponential moment estimate (h = {h})")));
    }
    Ok(HEstimate { h, se, dither_term: ds, noise_term: ws, samples: mc_samples })
}

/// `d_tilde` such that `e^{h + b} - 1 <= d_tilde + (e^{2b} - 1)` for all `b >= 0`.
///
/// `e^h - 1` suffices while `e^h <= 2`; beyond that the weak triangle inequality gives `e^{2h} - 1`.
pub fn offset_from_h(h: f64) -> f64 {
    if h <= std::f64::consts::LN_2 {
        h.exp_m1()
    } else {
        (2.0 * h).exp_m1()
    }
}

/// A plant, its policy and every certificate the bounds need.
#[derive(Debug, Clone)]
pub struct ExampleBundle {
    pub name: String,
    pub system: SystemModel,
    pub policy: PolicyFamily,
    pub cfs: ComparisonFunctionSet,
    pub excitation: Option<ExcitationCertificate>,
    pub rpi: RpiCertificate,
    pub lyapunov: Option<LyapunovCertificate>,
    pub lipschitz: LipschitzEstimate,
    pub h: HEstimate,
    pub gamma: f64,
    pub x0: DVector<f64>,
    pub vartheta0: DMatrix<f64>,
    /// Why a certificate is absent.
    pub notes: Vec<String>,
}

impl ExampleBundle {
    /// Inputs for the bound formulas; `Some` radius only for a bounded invariant set.
    pub fn bound_problem(&self) -> BoundProblem {
        let rpi_radius = self.rpi.region.is_bounded().then(|| self.rpi.region.inner_radius());
        BoundProblem {
            cfs: self.cfs.clone(),
            n: self.system.n,
            d: self.system.d,
            u_max: self.policy.u_max,
            sigma_w: self.system.process_noise.sub_gaussian_sigma(),
            gamma: self.gamma,
            theta_star_frob: self.system.theta_star().norm(),
            excitation: self.excitation.as_ref().map(ExcitationConstants::from),
            vartheta_bar: self.rpi.vartheta_bar,
            rpi_radius,
        }
    }

    pub fn x0_norm(&self) -> f64 {
        self.x0.norm()
    }

    fn missing(&self, what: &str) -> Error {
        let why = if self.notes.is_empty() { String::new() } else { format!(": {}", self.notes.join("; ")) };
        Error::Missing(format!("{what} certificate for {}{why}", self.name))
    }

    pub fn excitation(&self) -> Result<&ExcitationCertificate> {
        self.excitation.as_ref().ok_or_else(|| self.missing("excitation"))
    }

    pub fn lyapunov(&self) -> Result<&LyapunovCertificate> {
        self.lyapunov.as_ref().ok_or_else(|| self.missing("Lyapunov"))
    }
}

/// Serialisable summary of a bundle's certificates.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateSet<'a> {
    pub example: &'a str,
    pub excitation: Option<&'a ExcitationCertificate>,
    pub rpi: &'a RpiCertificate,
    pub lyapunov: Option<&'a LyapunovCertificate>,
    pub lipschitz: &'a LipschitzEstimate,
    pub h: &'a HEstimate,
    pub notes: &'a [String],
}

impl ExampleBundle {
    pub fn certificates(&self) -> CertificateSet<'_> {
        CertificateSet {
            example: &self.name,
            excitation: self.excitation.as_ref(),
            rpi: &self.rpi,
            lyapunov: self.lyapunov.as_ref(),
            lipschitz: &self.lipschitz,
            h: &self.h,
            notes: &self.notes,
        }
    }
}
