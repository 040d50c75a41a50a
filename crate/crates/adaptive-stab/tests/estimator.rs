//! Incremental least squares against a batch solve.

use adaptive_stab::estimator::{estimation_error, RlsEstimator};
use adaptive_stab::linalg::spectral_norm;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stacked least squares `[Z; sqrt(gamma) I] theta = [X - f; 0]` solved by SVD.
fn batch(zs: &[DVector<f64>], ys: &[DVector<f64>], gamma: f64) -> DMatrix<f64> {
    let d = zs[0].len();
    let n = ys[0].len();
    let rows = zs.len() + d;
    let mut a = DMatrix::zeros(rows, d);
    let mut b = DMatrix::zeros(rows, n);
    for (i, (z, y)) in zs.iter().zip(ys).enumerate() {
        a.set_row(i, &z.transpose());
        b.set_row(i, &y.transpose());
    }
    for j in 0..d {
        a[(zs.len() + j, j)] = gamma.sqrt();
    }
    a.svd(true, true).solve(&b, 0.0).unwrap()
}

#[test]
fn matches_batch_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=5);
        let n = rng.random_range(1..=3);
        let len = rng.random_range(1..=200);
        let gamma = 10f64.powf(rng.random_range(-4.0..1.0));
        let theta = DMatrix::from_fn(d, n, |_, _| rng.random_range(-2.0..2.0));
        let mut est = RlsEstimator::new(gamma, DMatrix::zeros(d, n)).unwrap();
        let (mut zs, mut ys) = (Vec::new(), Vec::new());
        for _ in 0..len {
            let z = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
            let f = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let w = DVector::from_fn(n, |_, _| rng.random_range(-0.1..0.1));
            let x = &f + theta.tr_mul(&z) + w;
            est.update(&z, &x, &f).unwrap();
            zs.push(z);
            ys.push(x - f);
        }
        let inc = est.estimate().unwrap();
        let bat = batch(&zs, &ys, gamma);
        let err = spectral_norm(&(&inc - &bat)) / spectral_norm(&bat).max(1e-300);
        worst = worst.max(err);
    }
    assert!(worst <= 1e-8, "worst relative error {worst}");
}

#[test]
fn initial_guess_until_data_arrives() {
    let v0 = DMatrix::from_element(2, 1, 0.3);
    let mut est = RlsEstimator::new(1.0, v0.clone()).unwrap();
    assert_eq!(est.estimate().unwrap(), v0);
    assert_eq!(est.gramian_extremes(), (1.0, 1.0));
    let z = DVector::from_column_slice(&[1.0, 0.0]);
    est.update(&z, &DVector::from_element(1, 2.0), &DVector::zeros(1)).unwrap();
    // G = diag(2, 1), C = [2, 0]^T.
    let th = est.estimate().unwrap();
    assert!((th[(0, 0)] - 1.0).abs() < 1e-15 && th[(1, 0)] == 0.0);
    assert_eq!(est.samples(), 1);
}

#[test]
fn rejects_bad_input() {
    assert!(RlsEstimator::new(0.0, DMatrix::zeros(1, 1)).is_err());
    assert!(RlsEstimator::new(f64::INFINITY, DMatrix::zeros(1, 1)).is_err());
    let mut est = RlsEstimator::new(1.0, DMatrix::zeros(2, 1)).unwrap();
    assert!(est.update(&DVector::zeros(3), &DVector::zeros(1), &DVector::zeros(1)).is_err());
    assert!(est.update(&DVector::from_element(2, f64::NAN), &DVector::zeros(1), &DVector::zeros(1)).is_err());
    assert!(estimation_error(&DMatrix::zeros(2, 1), &DMatrix::zeros(1, 2)).is_err());
}

#[test]
fn noiseless_data_recovers_parameter() {
    let theta = DMatrix::from_column_slice(2, 1, &[1.0, 0.1]);
    let mut est = RlsEstimator::new(1e-10, DMatrix::zeros(2, 1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let z = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        est.update(&z, &theta.tr_mul(&z), &DVector::zeros(1)).unwrap();
    }
    assert!(estimation_error(&est.estimate().unwrap(), &theta).unwrap() < 1e-8);
}
