use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{contract, Result};
use crate::linalg::{psd_sqrt, serde_rows, sym_eig_extremes};
use crate::region::RegionDescriptor;

/// Distribution family of a noise source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Independent `Uniform(-h_i, h_i)` coordinates.
    UniformBox { half_width: Vec<f64> },
    /// Zero-mean Gaussian with the given covariance.
    Gaussian {
        #[serde(with = "serde_rows")]
        cov: DMatrix<f64>,
    },
    /// Deterministic value.
    PointMass { value: Vec<f64> },
}

/// A noise model together with its sub-Gaussian variance proxy and support.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NoiseKind", into = "NoiseRepr")]
pub struct NoiseModel {
    kind: NoiseKind,
    sigma: f64,
    factor: Option<DMatrix<f64>>,
}

#[derive(Serialize)]
struct NoiseRepr {
    #[serde(flatten)]
    kind: NoiseKind,
    sub_gaussian_sigma: f64,
    support: RegionDescriptor,
}

impl From<NoiseModel> for NoiseRepr {
    fn from(n: NoiseModel) -> Self {
        Self { support: n.support(), sub_gaussian_sigma: n.sigma, kind: n.kind }
    }
}

impl TryFrom<NoiseKind> for NoiseModel {
    type Error = crate::error::Error;
    fn try_from(kind: NoiseKind) -> Result<Self> {
        Self::new(kind)
    }
}

impl NoiseModel {
    pub fn new(kind: NoiseKind) -> Result<Self> {
        let (sigma, factor) = match &kind {
            NoiseKind::UniformBox { half_width } => {
                if half_width.iter().any(|h| !(*h >= 0.0) || !h.is_finite()) {
                    return Err(contract("uniform half-widths must be finite and non-negative"));
                }
                // Hoeffding: a variable bounded in [-h, h] is h^2-sub-Gaussian.
                (half_width.iter().copied().fold(0.0, f64::max), None)
            }
            NoiseKind::Gaussian { cov } => {
                if cov.nrows() != cov.ncols() || (cov - cov.transpose()).amax() > 1e-12 * (1.0 + cov.amax()) {
                    return Err(contract("gaussian covariance must be symmetric"));
                }
                let (lo, hi) = sym_eig_extremes(cov);
                if lo < -1e-12 * (1.0 + hi) {
                    return Err(contract("gaussian covariance must be positive semi-definite"));
                }
                (hi.max(0.0).sqrt(), Some(psd_sqrt(cov)))
            }
            NoiseKind::PointMass { .. } => (0.0, None),
        };
        Ok(Self { kind, sigma, factor })
    }

    pub fn uniform(half_width: Vec<f64>) -> Result<Self> {
        Self::new(NoiseKind::UniformBox { half_width })
    }

    pub fn gaussian(cov: DMatrix<f64>) -> Result<Self> {
        Self::new(NoiseKind::Gaussian { cov })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(NoiseKind::PointMass { value: vec![0.0; dim] }).expect("point mass is always valid")
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            NoiseKind::UniformBox { half_width } => half_width.len(),
            NoiseKind::Gaussian { cov } => cov.nrows(),
            NoiseKind::PointMass { value } => value.len(),
        }
    }

    /// Variance proxy `sigma` in the sub-Gaussian sense.
    pub fn sub_gaussian_sigma(&self) -> f64 {
        self.sigma
    }

    pub fn support(&self) -> RegionDescriptor {
        match &self.kind {
            NoiseKind::UniformBox { half_width } => RegionDescriptor::symmetric_box(half_width),
            NoiseKind::Gaussian { .. } => RegionDescriptor::All,
            NoiseKind::PointMass { value } => RegionDescriptor::Box { lows: value.clone(), highs: value.clone() },
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self.kind, NoiseKind::Gaussian { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match &self.kind {
            NoiseKind::UniformBox { half_width } => DVector::from_iterator(
                half_width.len(),
                half_width.iter().map(|h| h * (2.0 * rng.random::<f64>() - 1.0)),
            ),
            NoiseKind::Gaussian { cov } => {
                let z = DVector::from_iterator(cov.nrows(), (0..cov.nrows()).map(|_| rng.sample::<f64, _>(StandardNormal)));
                self.factor.as_ref().expect("factor computed at construction") * z
            }
            NoiseKind::PointMass { value } => DVector::from_column_slice(value),
        }
    }

    /// A bounded box `{ F v : |v_i| <= z }` holding the noise with probability at least `1 - delta`.
    ///
    /// Bounded models return their own support (`F = I` with per-coordinate
    /// half-widths folded in, `z = 1`).
    pub fn truncation(&self, delta: f64) -> (DMatrix<f64>, f64) {
        match &self.kind {
            NoiseKind::UniformBox { half_width } => {
                (DMatrix::from_diagonal(&DVector::from_column_slice(half_width)), 1.0)
            }
            NoiseKind::PointMass { value } => (DMatrix::zeros(value.len(), value.len()), 0.0),
            NoiseKind::Gaussian { cov } => {
                let k = cov.nrows();
                let eig = cov.clone().symmetric_eigen();
                let scale = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                let factor = &eig.eigenvectors * DMatrix::from_diagonal(&scale);
                let normal = Normal::new(0.0, 1.0).expect("standard normal");
                let z = normal.inverse_cdf(1.0 - delta / (2.0 * k as f64));
                (factor, z)
            }
        }
    }

    /// Offset of a point mass (zero for the zero-mean families).
    pub fn mean(&self) -> DVector<f64> {
        match &self.kind {
            NoiseKind::PointMass { value } => DVector::from_column_slice(value),
            _ => DVector::zeros(self.dim()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_rows;

    #[test]
    fn sigma_proxies() {
        assert!(NoiseModel::uniform(vec![0.07]).unwrap().sub_gaussian_sigma() >= 0.07);
        let cov = from_rows(&[vec![2.0, 0.0], vec![0.0, 0.5]]).unwrap();
        let g = NoiseModel::gaussian(cov).unwrap();
        assert!((g.sub_gaussian_sigma().powi(2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let n = NoiseModel::uniform(vec![0.1, 0.2]).unwrap();
        let s = serde_json::to_string(&n).unwrap();
        assert!(s.contains("\"sub_gaussian_sigma\":0.2"));
        let back: NoiseModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back.kind(), n.kind());
    }
}
