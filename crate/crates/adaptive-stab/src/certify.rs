//! Monte-Carlo confirmation of a bundle's excitation, invariance and Lyapunov certificates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::examples::ExampleBundle;
use crate::excitation::{certificate_from_scan, moment_scan, theta_grid, ExcitationCertificate, MomentScan, MomentScanOptions};
use crate::lyapunov::{check_lyapunov, LyapunovReport};
use crate::region::RegionDescriptor;
use crate::rng::{substream, Stream};
use crate::rpi::{rpi_check, RpiCertificate, RpiOptions};
use crate::scalar::log_grid;

/// Sample budgets for the three scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSettings {
    pub x_points: usize,
    pub zeta_directions: usize,
    pub mc_samples: usize,
    /// Frobenius radii of parameter offsets from `theta*`; `None` uses `[vartheta_bar, 1, 10]`.
    pub theta_radii: Option<Vec<f64>>,
    pub theta_per_radius: usize,
    pub rpi_samples: usize,
    pub lyapunov_x_points: usize,
    pub lyapunov_theta_samples: usize,
    pub lyapunov_mc_samples: usize,
    /// Radius scanned when a region is the whole space.
    pub scan_cap: f64,
    pub seed: u64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            x_points: 41,
            zeta_directions: 16,
            mc_samples: 20_000,
            theta_radii: None,
            theta_per_radius: 4,
            rpi_samples: 20_000,
            lyapunov_x_points: 30,
            lyapunov_theta_samples: 4,
            lyapunov_mc_samples: 4_000,
            scan_cap: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifyWhat {
    Excitation,
    Rpi,
    Lyapunov,
    All,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcitationReport {
    pub certified: bool,
    /// Closed-form certificate shipped with the bundle.
    pub analytic: Option<ExcitationCertificate>,
    pub scan: Option<MomentScan>,
    pub monte_carlo: Option<ExcitationCertificate>,
    /// The scan does not contradict the analytic floor (`c_PE1 + 3 se >= floor`).
    pub analytic_confirmed: Option<bool>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RpiReport {
    pub certified: bool,
    pub certificate: RpiCertificate,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovCheck {
    pub certified: bool,
    pub report: Option<LyapunovReport>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub example: String,
    pub excitation: Option<ExcitationReport>,
    pub rpi: Option<RpiReport>,
    pub lyapunov: Option<LyapunovCheck>,
}

impl CertifyReport {
    pub fn certified(&self) -> bool {
        self.excitation.as_ref().is_none_or(|r| r.certified)
            && self.rpi.as_ref().is_none_or(|r| r.certified)
            && self.lyapunov.as_ref().is_none_or(|r| r.certified)
    }
}

fn scan_region(bundle: &ExampleBundle) -> RegionDescriptor {
    match &bundle.excitation {
        Some(e) => e.region.clone(),
        None => bundle.rpi.region.clone(),
    }
}

/// Parameter samples: `theta* + offsets` at the configured radii, plus zero.
pub fn theta_samples(bundle: &ExampleBundle, s: &ScanSettings) -> Vec<DMatrix<f64>> {
    let star = bundle.system.theta_star();
    let (d, n) = star.shape();
    let radii = s.theta_radii.clone().unwrap_or_else(|| vec![bundle.rpi.vartheta_bar, 1.0, 10.0]);
    let mut out: Vec<DMatrix<f64>> =
        theta_grid(d, n, &radii, s.theta_per_radius, s.seed).into_iter().map(|g| star + g).collect();
    out.push(DMatrix::zeros(d, n));
    out
}

pub fn certify_excitation(bundle: &ExampleBundle, s: &ScanSettings) -> Result<ExcitationReport> {
    let region = scan_region(bundle);
    let opts = MomentScanOptions {
        x_points: s.x_points,
        theta_samples: theta_samples(bundle, s),
        zeta_directions: s.zeta_directions,
        mc_samples: s.mc_samples,
        seed: s.seed,
        scan_cap: Some(s.scan_cap),
    };
    let analytic = bundle.excitation.clone();
    match moment_scan(&bundle.system, &bundle.policy, &region, &opts) {
        Ok(scan) => {
            let mc = certificate_from_scan(&scan, region, &opts)?;
            let confirmed = analytic.as_ref().map(|a| scan.c_pe1 + 3.0 * scan.c_pe1_se >= a.c_pe1);
            let certified = confirmed.unwrap_or(true);
            let reason = (!certified).then(|| {
                format!(
                    "scan first moment {:.4e} + 3 se ({:.2e}) falls below the analytic floor {:.4e}",
                    scan.c_pe1,
                    scan.c_pe1_se,
                    analytic.as_ref().map_or(0.0, |a| a.c_pe1)
                )
            });
            Ok(ExcitationReport { certified, analytic, scan: Some(scan), monte_carlo: Some(mc), analytic_confirmed: confirmed, reason })
        }
        Err(Error::NotCertified(msg)) => Ok(ExcitationReport {
            certified: false,
            analytic,
            scan: None,
            monte_carlo: None,
            analytic_confirmed: None,
            reason: Some(msg),
        }),
        Err(e) => Err(e),
    }
}

pub fn certify_rpi(bundle: &ExampleBundle, s: &ScanSettings) -> Result<RpiReport> {
    let opts = RpiOptions { sample_budget: s.rpi_samples, seed: s.seed, scan_cap: Some(s.scan_cap), ..RpiOptions::default() };
    let cert = rpi_check(&bundle.system, &bundle.policy, &bundle.rpi.region, bundle.rpi.vartheta_bar, &opts)?;
    let reason = cert.falsified.as_ref().map(|c| {
        format!("state {:?} steps to {:?}, outside the region", c.x.as_slice(), c.next.as_slice())
    });
    Ok(RpiReport { certified: cert.falsified.is_none(), certificate: cert, reason })
}

/// State samples along coordinate and random directions at log-spaced radii, kept
/// where `V` is finite.
fn lyapunov_states(bundle: &ExampleBundle, s: &ScanSettings) -> Vec<DVector<f64>> {
    let n = bundle.system.n;
    let region = &bundle.rpi.region;
    let limit = if region.is_bounded() { region.inner_radius().min(s.scan_cap) } else { s.scan_cap };
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        for sign in [-1.0, 1.0] {
            let mut e = DVector::zeros(n);
            e[i] = sign;
            dirs.push(e);
        }
    }
    if n > 1 {
        let mut rng = substream(s.seed, u64::MAX - 2, 0, Stream::Scan);
        for _ in 0..2 * n {
            let g = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            if g.norm() > 1e-12 {
                dirs.push(g.normalize());
            }
        }
    }
    let mut out = vec![DVector::zeros(n)];
    for r in log_grid(1e-3, limit.max(2e-3), s.lyapunov_x_points.max(2)) {
        out.extend(dirs.iter().map(|d| d * r));
    }
    out
}

pub fn certify_lyapunov(bundle: &ExampleBundle, s: &ScanSettings) -> Result<LyapunovCheck> {
    let Some(cert) = &bundle.lyapunov else {
        return Ok(LyapunovCheck {
            certified: false,
            report: None,
            reason: Some(format!("no Lyapunov certificate: {}", bundle.notes.join("; "))),
        });
    };
    let (d, n) = bundle.system.theta_star().shape();
    let vb = cert.vartheta_bar;
    let mut thetas = vec![DMatrix::zeros(d, n)];
    for r in [0.5 * vb, vb] {
        thetas.extend(theta_grid(d, n, &[r], s.lyapunov_theta_samples, s.seed.wrapping_add(1)).into_iter().skip(1));
    }
    let xs = lyapunov_states(bundle, s);
    let report = check_lyapunov(&bundle.system, &bundle.policy, cert, &xs, &thetas, s.lyapunov_mc_samples, s.seed);
    let reason = (!report.pass).then(|| report.failures.join("; "));
    Ok(LyapunovCheck { certified: report.pass, report: Some(report), reason })
}

pub fn certify(bundle: &ExampleBundle, what: CertifyWhat, s: &ScanSettings) -> Result<CertifyReport> {
    let want = |w| what == CertifyWhat::All || what == w;
    Ok(CertifyReport {
        example: bundle.name.clone(),
        excitation: want(CertifyWhat::Excitation).then(|| certify_excitation(bundle, s)).transpose()?,
        rpi: want(CertifyWhat::Rpi).then(|| certify_rpi(bundle, s)).transpose()?,
        lyapunov: want(CertifyWhat::Lyapunov).then(|| certify_lyapunov(bundle, s)).transpose()?,
    })
}
