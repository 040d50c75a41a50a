//! Plant, policy family and trajectory types.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{contract, Error, Result};
use crate::linalg::{mat_pow, min_singular, pinv, reachability_matrix, sat_unchecked};
use crate::noise::NoiseModel;
use crate::region::RegionDescriptor;

/// `(state, control) -> vector`.
pub type MapFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// `(state, dither, parameter) -> control`.
pub type PolicyFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>, &DMatrix<f64>) -> DVector<f64> + Send + Sync>;

/// `X(t+1) = f(X, U) + theta*^T psi(X, U) + W(t+1)`.
#[derive(Clone)]
pub struct SystemModel {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub q: usize,
    pub nominal_f: MapFn,
    pub basis_psi: MapFn,
    theta_star: DMatrix<f64>,
    pub process_noise: NoiseModel,
    pub state_space: RegionDescriptor,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("d", &self.d)
            .field("q", &self.q)
            .field("process_noise", &self.process_noise)
            .finish_non_exhaustive()
    }
}

impl SystemModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        d: usize,
        q: usize,
        nominal_f: MapFn,
        basis_psi: MapFn,
        theta_star: DMatrix<f64>,
        process_noise: NoiseModel,
        state_space: RegionDescriptor,
    ) -> Result<Self> {
        if theta_star.shape() != (d, n) {
            return Err(contract(format!(
                "theta_star is {:?}, expected ({d}, {n})",
                theta_star.shape()
            )));
        }
        if process_noise.dim() != n {
            return Err(contract("process noise dimension must equal n"));
        }
        Ok(Self { n, m, d, q, nominal_f, basis_psi, theta_star, process_noise, state_space })
    }

    /// Ground-truth parameter. Used by the simulator and by evaluation code only;
    /// policies and the estimator never receive it.
    pub fn theta_star(&self) -> &DMatrix<f64> {
        &self.theta_star
    }

    pub fn psi(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.basis_psi)(x, u)
    }

    pub fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.nominal_f)(x, u)
    }
}

/// `g(x, u, w) = f(x, u) + theta*^T psi(x, u) + w`.
pub fn step(sys: &SystemModel, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != sys.n || u.len() != sys.m || w.len() != sys.n {
        return Err(contract(format!(
            "step dimensions (x {}, u {}, w {}) do not match (n {}, m {})",
            x.len(),
            u.len(),
            w.len(),
            sys.n,
            sys.m
        )));
    }
    let z = sys.psi(x, u);
    if z.len() != sys.d {
        return Err(contract(format!("basis returned length {}, expected {}", z.len(), sys.d)));
    }
    Ok(step_unchecked(sys, x, u, w))
}

pub(crate) fn step_unchecked(sys: &SystemModel, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let z = sys.psi(x, u);
    sys.f(x, u) + sys.theta_star.tr_mul(&z) + w
}

/// A parameterised control law `U = alpha(x, s, vartheta)` with dither distribution.
#[derive(Clone)]
pub struct PolicyFamily {
    pub eval: PolicyFn,
    pub u_max: f64,
    pub dither: NoiseModel,
}

impl fmt::Debug for PolicyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolicyFamily")
            .field("u_max", &self.u_max)
            .field("dither", &self.dither)
            .finish_non_exhaustive()
    }
}

impl PolicyFamily {
    pub fn apply(&self, x: &DVector<f64>, s: &DVector<f64>, theta: &DMatrix<f64>) -> DVector<f64> {
        (self.eval)(x, s, theta)
    }
}

/// Split a `d x n` parameter into `(vartheta_1, vartheta_2)` with
/// `vartheta^T = [vartheta_1  vartheta_2]`.
pub fn split_theta(theta: &DMatrix<f64>, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = theta.nrows();
    let t1 = theta.rows(0, n).transpose();
    let t2 = theta.rows(n, d - n).transpose();
    (t1, t2)
}

/// Saturated certainty-equivalence law `sat_{u1}(-vartheta_2^+ vartheta_1^power x) + s`.
///
/// With the sub-sampled parameterisation `vartheta_1` already estimates the
/// `kappa`-step transition matrix, so callers building that system pass `power = 1`.
pub fn policy_ce_sat(
    theta1: &DMatrix<f64>,
    theta2: &DMatrix<f64>,
    x: &DVector<f64>,
    s: &DVector<f64>,
    u_bar1: f64,
    power: usize,
) -> Result<DVector<f64>> {
    let n = x.len();
    if theta1.shape() != (n, n) || theta2.nrows() != n || s.len() != theta2.ncols() {
        return Err(contract("policy dimensions are inconsistent"));
    }
    if !(u_bar1 > 0.0) {
        return Err(contract("u_bar1 must be positive"));
    }
    Ok(ce_sat_unchecked(theta1, theta2, x, s, u_bar1, power))
}

pub(crate) fn ce_sat_unchecked(
    theta1: &DMatrix<f64>,
    theta2: &DMatrix<f64>,
    x: &DVector<f64>,
    s: &DVector<f64>,
    u_bar1: f64,
    power: usize,
) -> DVector<f64> {
    let a = if power == 1 { theta1.clone() } else { mat_pow(theta1, power) };
    let fb = -(pinv(theta2) * (a * x));
    sat_unchecked(&fb, u_bar1) + s
}

/// Closed-loop record of one trial.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// `X(0..=T)`
    pub states: Vec<DVector<f64>>,
    /// `U(0..T)`
    pub controls: Vec<DVector<f64>>,
    /// `S(0..T)`
    pub dithers: Vec<DVector<f64>>,
    /// `W(1..=T)`
    pub noises: Vec<DVector<f64>>,
    /// `theta_hat(-1..=T)`; entry `k` is the estimate at time `k - 1`.
    pub estimates: Vec<DMatrix<f64>>,
    /// `Z(1..=T)`
    pub regressors: Vec<DVector<f64>>,
    /// Set when a non-finite state stopped the run early.
    pub diverged: bool,
}

impl Trajectory {
    /// Number of completed transitions.
    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    /// Estimate available at time `t` (for `t >= -1`).
    pub fn estimate_at(&self, t: i64) -> &DMatrix<f64> {
        &self.estimates[(t + 1) as usize]
    }
}

/// The `kappa`-step sub-sampled linear system with `f = 0`, `psi = [x; u]`,
/// `theta* = [A^kappa  R_kappa(A, B)]^T` and Gaussian noise with covariance
/// `R_kappa(A, I) (I_kappa (x) Sigma_w) R_kappa(A, I)^T`.
pub fn subsample_linear(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma_w: &DMatrix<f64>, kappa: usize) -> Result<SystemModel> {
    let n = a.nrows();
    let r = reachability_matrix(a, b, kappa)?;
    if sigma_w.shape() != (n, n) {
        return Err(contract("Sigma_w must be n x n"));
    }
    if min_singular(a) <= 1e-12 {
        return Err(contract("A must be full rank"));
    }
    let smin = if r.nrows() <= r.ncols() {
        min_singular(&r)
    } else {
        0.0
    };
    if smin <= 1e-9 {
        return Err(Error::NotCertified(format!(
            "(A, B) is not {kappa}-step reachable: sigma_min(R_kappa) = {smin:.3e}"
        )));
    }
    let ak = mat_pow(a, kappa);
    let ri = reachability_matrix(a, &DMatrix::identity(n, n), kappa)?;
    let mut block = DMatrix::zeros(n * kappa, n * kappa);
    for i in 0..kappa {
        block.view_mut((i * n, i * n), (n, n)).copy_from(sigma_w);
    }
    let cov = &ri * block * ri.transpose();
    let cov = 0.5 * (&cov + cov.transpose());
    let mk = r.ncols();
    let d = n + mk;
    let mut theta_t = DMatrix::zeros(n, d);
    theta_t.view_mut((0, 0), (n, n)).copy_from(&ak);
    theta_t.view_mut((0, n), (n, mk)).copy_from(&r);
    let psi: MapFn = Arc::new(move |x: &DVector<f64>, u: &DVector<f64>| {
        let mut z = DVector::zeros(x.len() + u.len());
        z.rows_mut(0, x.len()).copy_from(x);
        z.rows_mut(x.len(), u.len()).copy_from(u);
        z
    });
    let f: MapFn = Arc::new(move |x: &DVector<f64>, _u: &DVector<f64>| DVector::zeros(x.len()));
    SystemModel::new(
        n,
        mk,
        d,
        mk,
        f,
        psi,
        theta_t.transpose(),
        NoiseModel::gaussian(cov)?,
        RegionDescriptor::All,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_rows;
    use crate::noise::NoiseKind;

    #[test]
    fn subsample_by_one_is_identity() {
        let a = from_rows(&[vec![0.5, 0.1], vec![0.0, 0.9]]).unwrap();
        let b = from_rows(&[vec![1.0, 0.0], vec![0.5, 2.0]]).unwrap();
        let sw = from_rows(&[vec![0.01, 0.0], vec![0.0, 0.02]]).unwrap();
        let sys = subsample_linear(&a, &b, &sw, 1).unwrap();
        let expected = from_rows(&[vec![0.5, 0.1, 1.0, 0.0], vec![0.0, 0.9, 0.5, 2.0]]).unwrap().transpose();
        assert_eq!(sys.theta_star(), &expected);
        match sys.process_noise.kind() {
            NoiseKind::Gaussian { cov } => assert!((cov - &sw).amax() < 1e-15),
            _ => panic!("expected gaussian"),
        }
    }

    #[test]
    fn double_integrator_two_steps() {
        let a = from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let b = from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let sys = subsample_linear(&a, &b, &DMatrix::identity(2, 2), 2).unwrap();
        let expected = from_rows(&[vec![1.0, 2.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(sys.theta_star().transpose(), expected);
    }

    #[test]
    fn singular_a_rejected() {
        let a = from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let b = from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert!(subsample_linear(&a, &b, &DMatrix::identity(2, 2), 2).is_err());
    }

    #[test]
    fn ce_sat_examples() {
        let t1 = DMatrix::from_element(1, 1, 1.0);
        let t2 = DMatrix::from_element(1, 1, 0.1);
        let x = DVector::from_element(1, 0.05);
        let s = DVector::zeros(1);
        let u = policy_ce_sat(&t1, &t2, &x, &s, 0.9, 1).unwrap();
        assert!((u[0] + 0.5).abs() < 1e-12);
        let u = policy_ce_sat(&t1, &t2, &DVector::zeros(1), &s, 0.9, 1).unwrap();
        assert_eq!(u[0], 0.0);
        let s = DVector::from_element(1, 0.03);
        let u = policy_ce_sat(&t1, &DMatrix::zeros(1, 1), &x, &s, 0.9, 1).unwrap();
        assert_eq!(u[0], 0.03);
    }
}
