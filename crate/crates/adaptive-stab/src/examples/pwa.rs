use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{compute_h, offset_from_h, ExampleBundle};
use crate::bounds::ComparisonFunctionSet;
use crate::error::{Error, Result};
use crate::excitation::excitation_from_moments;
use crate::lipschitz::{estimate_policy_lipschitz, LipschitzOptions};
use crate::lyapunov::LyapunovCertificate;
use crate::model::{ce_sat_unchecked, split_theta, MapFn, PolicyFamily, PolicyFn, SystemModel};
use crate::noise::NoiseModel;
use crate::region::RegionDescriptor;
use crate::rpi::RpiCertificate;
use crate::scalar::ScalarFn;

/// Scalar plant `X+ = X + 0.1 1{|X| <= x_bar} U + W` with `W ~ U(-w_bar, w_bar)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PwaExampleParams {
    pub x_bar: f64,
    pub u_bar1: f64,
    /// Dither half-width.
    pub u_bar2: f64,
    pub w_bar: f64,
    pub gamma: f64,
    pub x0: f64,
    /// Initial estimate `[vartheta_1, vartheta_2]`.
    pub vartheta0: [f64; 2],
    /// Parameter-ball radius for the Lipschitz scan; defaults to half of `0.1`.
    pub lipschitz_ball: Option<f64>,
    pub lipschitz_samples: usize,
    /// Overrides the derived parameter tolerance.
    pub vartheta_bar: Option<f64>,
    pub h_samples: usize,
    pub seed: u64,
}

impl Default for PwaExampleParams {
    fn default() -> Self {
        Self {
            x_bar: 3000.0,
            u_bar1: 0.9,
            u_bar2: 0.1,
            w_bar: 0.07,
            gamma: 1e-4,
            x0: 0.5,
            vartheta0: [0.0, 0.0],
            lipschitz_ball: None,
            lipschitz_samples: 40_000,
            vartheta_bar: None,
            h_samples: 200_000,
            seed: 0,
        }
    }
}

const GAIN: f64 = 0.1;

impl PwaExampleParams {
    pub fn u_max(&self) -> f64 {
        self.u_bar1 + self.u_bar2
    }

    fn validate(&self) -> Result<()> {
        let pos = [("x_bar", self.x_bar), ("u_bar1", self.u_bar1), ("w_bar", self.w_bar), ("gamma", self.gamma)];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.u_bar2 >= 0.0) || !self.u_bar2.is_finite() {
            return Err(Error::Config(format!("u_bar2 must be non-negative and finite, got {}", self.u_bar2)));
        }
        let need = self.w_bar + GAIN * (self.u_max() + self.u_bar1);
        if self.x_bar < need {
            return Err(Error::Config(format!(
                "region condition x_bar >= w_bar + 0.1 (u_max + u_bar1) fails: {} < {need}",
                self.x_bar
            )));
        }
        let lhs = GAIN * self.u_bar1;
        let rhs = GAIN * self.u_bar2 + self.w_bar;
        if !(lhs > rhs) {
            return Err(Error::Config(format!(
                "control authority condition 0.1 u_bar1 > 0.1 u_bar2 + w_bar fails: {lhs} <= {rhs}"
            )));
        }
        Ok(())
    }
}

/// Plant, policy, comparison functions and analytic certificates for the PWA example.
pub fn build_pwa(p: &PwaExampleParams) -> Result<ExampleBundle> {
    p.validate()?;
    let x_bar = p.x_bar;
    let theta_star = DMatrix::from_column_slice(2, 1, &[1.0, GAIN]);
    let psi: MapFn = Arc::new(move |x: &DVector<f64>, u: &DVector<f64>| {
        let on = if x[0].abs() <= x_bar { u[0] } else { 0.0 };
        DVector::from_column_slice(&[x[0], on])
    });
    let f: MapFn = Arc::new(|_x: &DVector<f64>, _u: &DVector<f64>| DVector::zeros(1));
    let noise = NoiseModel::uniform(vec![p.w_bar])?;
    let system = SystemModel::new(1, 1, 2, 1, f, psi, theta_star.clone(), noise.clone(), RegionDescriptor::All)?;

    let u1 = p.u_bar1;
    let eval: PolicyFn = Arc::new(move |x: &DVector<f64>, s: &DVector<f64>, th: &DMatrix<f64>| {
        let (t1, t2) = split_theta(th, 1);
        ce_sat_unchecked(&t1, &t2, x, s, u1, 1)
    });
    let dither = NoiseModel::uniform(vec![p.u_bar2])?;
    let policy = PolicyFamily { eval, u_max: p.u_max(), dither: dither.clone() };

    let c_pe1 = (p.w_bar / 4.0).min(p.w_bar * p.u_bar2 / (8.0 * p.u_bar1 + 4.0 * p.w_bar));
    let c_pe2 = 3.0 * (p.w_bar.powi(2) / 3.0).max(p.u_bar2.powi(2) / 3.0 + 4.0 * p.u_bar1.powi(2));
    let mut notes = Vec::new();
    let excitation = if c_pe1 > 0.0 {
        let mut e = excitation_from_moments(c_pe1, c_pe2)?;
        e.region = RegionDescriptor::interval(x_bar - p.w_bar);
        Some(e)
    } else {
        notes.push("zero dither gives no first-moment floor".to_string());
        None
    };

    let feedback = move |x: &DVector<f64>, th: &DMatrix<f64>| {
        let (t1, t2) = split_theta(th, 1);
        ce_sat_unchecked(&t1, &t2, x, &DVector::zeros(1), u1, 1)
    };
    let ball = p.lipschitz_ball.unwrap_or(0.5 * GAIN);
    let lip_opts = LipschitzOptions { sample_budget: p.lipschitz_samples, seed: p.seed, ..LipschitzOptions::default() };
    let lipschitz = estimate_policy_lipschitz(&feedback, &theta_star, 1, ball, &lip_opts)?;
    let c = lipschitz.c;

    let margin = p.u_bar1 - p.u_bar2 - p.w_bar / GAIN;
    let vartheta_bar = match p.vartheta_bar {
        Some(v) => v,
        None => ball.min(0.9 * margin / c),
    };
    if !(vartheta_bar > 0.0) {
        return Err(Error::NotCertified(format!("no positive parameter tolerance: margin {margin}, C = {c}")));
    }
    let rpi_half = x_bar - p.w_bar - GAIN * p.u_max();
    let region = RegionDescriptor::interval(rpi_half);
    let rpi = RpiCertificate { region: region.clone(), vartheta_bar, samples_checked: 0, falsified: None, truncation: None };

    let h = compute_h(&DMatrix::from_element(1, 1, GAIN), &dither, &noise, p.h_samples, p.seed)?;
    let h_up = h.upper();
    let rate = -(-GAIN * p.u_bar1 + h_up + GAIN * c * vartheta_bar).exp_m1();
    let lyapunov = if !(h_up < GAIN * p.u_bar1) {
        notes.push(format!("noise exponent h = {h_up:.4e} (h + 3 se) is not below 0.1 u_bar1 = {}", GAIN * p.u_bar1));
        None
    } else if !(rate > 0.0) {
        notes.push(format!(
            "Lyapunov decrease rate is not positive: 1 - exp(-0.1 u_bar1 + h + 0.1 C vartheta_bar) = {rate:.4e}"
        ));
        None
    } else {
        Some(LyapunovCertificate {
        v: ScalarFn::exp_m1(1.0, 1.0),
        alpha1: ScalarFn::exp_m1(1.0, 1.0),
        alpha2: ScalarFn::exp_m1(1.0, 1.0),
        alpha3: ScalarFn::exp_m1(rate, 1.0),
        sigma3: ScalarFn::exp_m1(1.0, 2.0 * GAIN * c),
        d_tilde: offset_from_h(h_up),
        alpha_v: ScalarFn::linear(rate),
        region,
        vartheta_bar,
    })
    };

    let cfs = ComparisonFunctionSet {
        chi1: ScalarFn::linear(1e-9),
        chi2: ScalarFn::identity(),
        chi3: ScalarFn::linear(GAIN),
        chi4: ScalarFn::identity(),
        chi5: ScalarFn::identity(),
        sigma1: ScalarFn::identity(),
        sigma2: ScalarFn::identity(),
        c1: 0.0,
    };
    Ok(ExampleBundle {
        name: "pwa".into(),
        system,
        policy,
        cfs,
        excitation,
        rpi,
        lyapunov,
        lipschitz,
        h,
        gamma: p.gamma,
        x0: DVector::from_element(1, p.x0),
        vartheta0: DMatrix::from_column_slice(2, 1, &p.vartheta0),
        notes,
    })
}
