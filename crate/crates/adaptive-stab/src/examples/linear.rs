use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{compute_h, offset_from_h, ExampleBundle};
use crate::bounds::ComparisonFunctionSet;
use crate::error::{Error, Result};
use crate::excitation::excitation_from_moments;
use crate::linalg::{min_singular, reachability_matrix, serde_rows, spectral_norm, sym_eig_extremes};
use crate::lipschitz::{estimate_policy_lipschitz, LipschitzOptions};
use crate::lyapunov::LyapunovCertificate;
use crate::model::{ce_sat_unchecked, split_theta, subsample_linear, PolicyFamily, PolicyFn};
use crate::noise::NoiseModel;
use crate::region::RegionDescriptor;
use crate::rpi::RpiCertificate;
use crate::scalar::ScalarFn;

/// `X+ = A X + B U + W`, `W ~ N(0, Sigma_w)`, controlled every `kappa` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearExampleParams {
    #[serde(with = "serde_rows")]
    pub a: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub b: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub sigma_w: DMatrix<f64>,
    pub kappa: usize,
    pub u_max: f64,
    pub u_bar1: f64,
    pub gamma: f64,
    pub x0: Vec<f64>,
    /// Initial estimate as `d` rows of length `n`; zero when absent.
    pub vartheta0: Option<Vec<Vec<f64>>>,
    /// Parameter-ball radius for the Lipschitz scan; defaults to half of `sigma_min(R)`.
    pub lipschitz_ball: Option<f64>,
    pub lipschitz_samples: usize,
    pub vartheta_bar: Option<f64>,
    pub h_samples: usize,
    pub seed: u64,
}

impl Default for LinearExampleParams {
    fn default() -> Self {
        Self {
            a: DMatrix::from_element(1, 1, 0.99),
            b: DMatrix::from_element(1, 1, 1.0),
            sigma_w: DMatrix::from_element(1, 1, 0.01),
            kappa: 1,
            u_max: 2.0,
            u_bar1: 1.5,
            gamma: 1e-4,
            x0: vec![0.5],
            vartheta0: None,
            lipschitz_ball: None,
            lipschitz_samples: 40_000,
            vartheta_bar: None,
            h_samples: 200_000,
            seed: 0,
        }
    }
}

impl LinearExampleParams {
    /// Per-coordinate dither half-width `(u_max - u_bar1) / sqrt(kappa m)`.
    pub fn u_bar2(&self) -> f64 {
        (self.u_max - self.u_bar1) / ((self.kappa * self.b.ncols()) as f64).sqrt()
    }

    /// The double integrator sub-sampled every two steps.
    pub fn double_integrator() -> Self {
        Self {
            a: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            b: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            sigma_w: DMatrix::identity(2, 2) * 0.01,
            kappa: 2,
            x0: vec![0.5, 0.0],
            ..Self::default()
        }
    }
}

/// Spectral norm of `A` above which the global Lyapunov construction is refused.
const A_NORM_LIMIT: f64 = 1.0 + 1e-12;

/// Plant, policy, comparison functions and global certificates for the linear example.
pub fn build_linear(p: &LinearExampleParams) -> Result<ExampleBundle> {
    let n = p.a.nrows();
    if p.x0.len() != n {
        return Err(Error::Config(format!("x0 has length {}, expected {n}", p.x0.len())));
    }
    if !(p.gamma > 0.0) {
        return Err(Error::Config("gamma must be positive".into()));
    }
    if !(p.u_bar1 > 0.0 && p.u_bar1 < p.u_max) {
        return Err(Error::Config(format!("need 0 < u_bar1 < u_max, got u_bar1 = {}, u_max = {}", p.u_bar1, p.u_max)));
    }
    let mut notes = Vec::new();
    let a_norm = spectral_norm(&p.a);
    let system = subsample_linear(&p.a, &p.b, &p.sigma_w, p.kappa)?;
    let mk = system.m;
    let r = reachability_matrix(&p.a, &p.b, p.kappa)?;
    let r_norm = spectral_norm(&r);
    let r_min = min_singular(&r);
    let ri_norm = spectral_norm(&reachability_matrix(&p.a, &DMatrix::identity(n, n), p.kappa)?);

    let u1 = p.u_bar1;
    let eval: PolicyFn = Arc::new(move |x: &DVector<f64>, s: &DVector<f64>, th: &DMatrix<f64>| {
        let (t1, t2) = split_theta(th, x.len());
        ce_sat_unchecked(&t1, &t2, x, s, u1, 1)
    });
    let u2 = p.u_bar2();
    let dither = NoiseModel::uniform(vec![u2; mk])?;
    let policy = PolicyFamily { eval, u_max: p.u_max, dither: dither.clone() };

    let cov = match system.process_noise.kind() {
        crate::noise::NoiseKind::Gaussian { cov } => cov.clone(),
        _ => unreachable!("sub-sampled noise is Gaussian"),
    };
    let (lam_min, lam_max) = sym_eig_extremes(&cov);
    let nf = n as f64;
    let sl = (lam_min.max(0.0) * nf).sqrt();
    let c_pe1 = ((sl * (mk as f64).sqrt() * u2) / (2.0 * (2.0 * std::f64::consts::PI).sqrt() * u1 + 4.0 * sl))
        .min((lam_min.max(0.0) * nf / (2.0 * std::f64::consts::PI)).sqrt());
    let c_pe2 = 3.0 * (lam_max.max(u2 * u2 / 3.0) + 4.0 * u1 * u1);
    let excitation = if c_pe1 > 0.0 {
        Some(excitation_from_moments(c_pe1, c_pe2)?)
    } else {
        notes.push("degenerate noise or dither gives no first-moment floor".to_string());
        None
    };

    let theta_star = system.theta_star().clone();
    let feedback = move |x: &DVector<f64>, th: &DMatrix<f64>| {
        let (t1, t2) = split_theta(th, x.len());
        ce_sat_unchecked(&t1, &t2, x, &DVector::zeros(t2.ncols()), u1, 1)
    };
    let ball = p.lipschitz_ball.unwrap_or(0.5 * r_min);
    let lip_opts = LipschitzOptions { sample_budget: p.lipschitz_samples, seed: p.seed, ..LipschitzOptions::default() };
    let lipschitz = estimate_policy_lipschitz(&feedback, &theta_star, n, ball, &lip_opts)?;
    let c = lipschitz.c;

    let h = compute_h(&r, &dither, &system.process_noise, p.h_samples, p.seed)?;
    let h_up = h.upper();
    let authority = r_min * u1;
    let vartheta_bar = match p.vartheta_bar {
        Some(v) => v,
        None => ball.min(0.9 * (authority - h_up) / (r_norm * c)),
    };
    if !(vartheta_bar > 0.0) {
        return Err(Error::NotCertified(format!(
            "no positive parameter tolerance: h = {h_up:.4e} (h + 3 se) against sigma_min(R) u_bar1 = {authority:.4e}"
        )));
    }
    let rate = -(-authority + h_up + r_norm * c * vartheta_bar).exp_m1();
    let lyapunov = if a_norm > A_NORM_LIMIT {
        notes.push(format!(
            "|A| = {a_norm:.6} exceeds 1; the exponential Lyapunov function has positive drift along expanding directions"
        ));
        None
    } else if !(h_up < authority) {
        notes.push(format!("noise exponent h = {h_up:.4e} (h + 3 se) is not below sigma_min(R) u_bar1 = {authority:.4e}"));
        None
    } else if !(rate > 0.0) {
        notes.push(format!("Lyapunov decrease rate is not positive: {rate:.4e}"));
        None
    } else {
        Some(LyapunovCertificate {
        v: ScalarFn::exp_m1(1.0, 1.0),
        alpha1: ScalarFn::exp_m1(1.0, 1.0),
        alpha2: ScalarFn::exp_m1(1.0, 1.0),
        alpha3: ScalarFn::exp_m1(rate, 1.0),
        sigma3: ScalarFn::exp_m1(1.0, 2.0 * r_norm * c),
        d_tilde: offset_from_h(h_up),
        alpha_v: ScalarFn::linear(rate),
        region: RegionDescriptor::All,
        vartheta_bar,
    })
    };
    let cfs = ComparisonFunctionSet {
        chi1: ScalarFn::linear(1e-9),
        chi2: ScalarFn::identity(),
        chi3: ScalarFn::linear(r_norm),
        chi4: ScalarFn::linear(ri_norm),
        chi5: ScalarFn::identity(),
        sigma1: ScalarFn::identity(),
        sigma2: ScalarFn::identity(),
        c1: 0.0,
    };
    let d = system.d;
    let vartheta0 = match &p.vartheta0 {
        None => DMatrix::zeros(d, n),
        Some(rows) => {
            let m = crate::linalg::from_rows(rows)?;
            if m.shape() != (d, n) {
                return Err(Error::Config(format!("vartheta0 is {:?}, expected ({d}, {n})", m.shape())));
            }
            m
        }
    };
    Ok(ExampleBundle {
        name: "linear".into(),
        system,
        policy,
        cfs,
        excitation,
        rpi: RpiCertificate::global(vartheta_bar),
        lyapunov,
        lipschitz,
        h,
        gamma: p.gamma,
        x0: DVector::from_column_slice(&p.x0),
        vartheta0,
        notes,
    })
}
