//! Regularised least-squares estimation.

use nalgebra::{DMatrix, DVector};

use crate::error::{contract, Error, Result};
use crate::linalg::{spectral_norm, sym_eig_extremes};
use crate::model::SystemModel;

/// Incremental regularised least squares.
///
/// Keeps `G = sum Z Z^T + gamma I` and `C = sum Z (X - f)^T`; the estimate is
/// a fresh solve of `G theta = C` on every query.
#[derive(Debug, Clone)]
pub struct RlsEstimator {
    gamma: f64,
    g: DMatrix<f64>,
    c: DMatrix<f64>,
    t: usize,
    vartheta0: DMatrix<f64>,
}

impl RlsEstimator {
    pub fn new(gamma: f64, vartheta0: DMatrix<f64>) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(contract(format!("gamma must be positive and finite, got {gamma}")));
        }
        let (d, n) = vartheta0.shape();
        Ok(Self {
            gamma,
            g: DMatrix::identity(d, d) * gamma,
            c: DMatrix::zeros(d, n),
            t: 0,
            vartheta0,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gramian(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn samples(&self) -> usize {
        self.t
    }

    /// Add one regressor/measurement pair.
    pub fn update(&mut self, z: &DVector<f64>, x_next: &DVector<f64>, f_val: &DVector<f64>) -> Result<()> {
        let (d, n) = self.c.shape();
        if z.len() != d || x_next.len() != n || f_val.len() != n {
            return Err(contract("update dimensions do not match the estimator"));
        }
        if z.iter().chain(x_next.iter()).chain(f_val.iter()).any(|v| !v.is_finite()) {
            return Err(contract("non-finite update rejected"));
        }
        self.g.ger(1.0, z, z, 1.0);
        let resid = x_next - f_val;
        self.c.ger(1.0, z, &resid, 1.0);
        self.t += 1;
        Ok(())
    }

    /// `theta_hat(t)`; the initial guess while no data has been seen.
    pub fn estimate(&self) -> Result<DMatrix<f64>> {
        if self.t == 0 {
            return Ok(self.vartheta0.clone());
        }
        let chol = self
            .g
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("regularised Gramian lost positive definiteness".into()))?;
        Ok(chol.solve(&self.c))
    }

    /// `(lambda_min(G), lambda_max(G))`.
    pub fn gramian_extremes(&self) -> (f64, f64) {
        sym_eig_extremes(&self.g)
    }
}

/// `Z(t) = psi(X(t-1), U(t-1))`.
pub fn regressor(sys: &SystemModel, x_prev: &DVector<f64>, u_prev: &DVector<f64>) -> Result<DVector<f64>> {
    if x_prev.len() != sys.n || u_prev.len() != sys.m {
        return Err(contract("regressor dimensions do not match the system"));
    }
    Ok(sys.psi(x_prev, u_prev))
}

/// Spectral norm of `theta_hat - theta_star`.
pub fn estimation_error(theta_hat: &DMatrix<f64>, theta_star: &DMatrix<f64>) -> Result<f64> {
    if theta_hat.shape() != theta_star.shape() {
        return Err(contract("estimate and truth have different shapes"));
    }
    Ok(spectral_norm(&(theta_hat - theta_star)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn update_examples() {
        let mut e = RlsEstimator::new(1.0, DMatrix::zeros(1, 1)).unwrap();
        e.update(&v(&[1.0]), &v(&[2.0]), &v(&[0.0])).unwrap();
        assert_eq!((e.gramian()[(0, 0)], e.cross()[(0, 0)]), (2.0, 2.0));
        assert!((e.estimate().unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
        e.update(&v(&[1.0]), &v(&[2.0]), &v(&[0.0])).unwrap();
        assert_eq!((e.gramian()[(0, 0)], e.cross()[(0, 0)]), (3.0, 4.0));
        e.update(&v(&[0.0]), &v(&[5.0]), &v(&[0.0])).unwrap();
        assert_eq!((e.gramian()[(0, 0)], e.cross()[(0, 0)], e.samples()), (3.0, 4.0, 3));
        assert!(e.update(&v(&[f64::NAN]), &v(&[0.0]), &v(&[0.0])).is_err());
    }

    #[test]
    fn estimate_examples() {
        let th0 = DMatrix::from_element(1, 1, 0.7);
        assert_eq!(RlsEstimator::new(1.0, th0.clone()).unwrap().estimate().unwrap(), th0);
        let mut e = RlsEstimator::new(1e6, DMatrix::zeros(1, 1)).unwrap();
        e.update(&v(&[1.0]), &v(&[2.0]), &v(&[0.0])).unwrap();
        assert!(e.estimate().unwrap()[(0, 0)].abs() < 3e-6);
    }

    #[test]
    fn gramian_extremes_examples() {
        let e = RlsEstimator::new(0.5, DMatrix::zeros(3, 1)).unwrap();
        assert_eq!(e.gramian_extremes(), (0.5, 0.5));
        let mut e = RlsEstimator::new(1.0, DMatrix::zeros(2, 1)).unwrap();
        for _ in 0..5 {
            e.update(&v(&[1.0, 0.0]), &v(&[0.0]), &v(&[0.0])).unwrap();
        }
        assert_eq!(e.gramian_extremes(), (1.0, 6.0));
    }

    #[test]
    fn estimation_error_examples() {
        let a = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(estimation_error(&a, &a).unwrap(), 0.0);
        let d = DMatrix::from_diagonal(&v(&[3.0, 4.0]));
        assert!((estimation_error(&d, &DMatrix::zeros(2, 2)).unwrap() - 4.0).abs() < 1e-12);
        let u = v(&[1.0, 2.0, 2.0]);
        let w = v(&[3.0, 4.0]);
        let uv = &u * w.transpose();
        assert!((estimation_error(&uv, &DMatrix::zeros(3, 2)).unwrap() - 15.0).abs() < 1e-12);
        assert!(estimation_error(&a, &DMatrix::zeros(1, 2)).is_err());
    }
}
