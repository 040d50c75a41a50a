//! Small dense linear-algebra helpers.
//!
//! All problem sizes here are tiny, so everything goes through `nalgebra`'s
//! dynamically sized matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{contract, Result};

/// Radial saturation: `x` if `|x| <= r`, otherwise `x / |x| * r`.
pub fn sat(x: &DVector<f64>, r: f64) -> Result<DVector<f64>> {
    if !(r > 0.0) {
        return Err(contract(format!("saturation radius must be positive, got {r}")));
    }
    Ok(sat_unchecked(x, r))
}

pub(crate) fn sat_unchecked(x: &DVector<f64>, r: f64) -> DVector<f64> {
    let nx = x.norm();
    if nx <= r {
        x.clone()
    } else {
        x * (r / nx)
    }
}

/// Moore-Penrose pseudo-inverse via SVD, singular values below `1e-12 * sigma_max` treated as zero.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    if rows == 1 && cols == 1 {
        let v = m[(0, 0)];
        return DMatrix::from_element(1, 1, if v == 0.0 { 0.0 } else { 1.0 / v });
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(cols, rows);
    }
    let cutoff = 1e-12 * smax;
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.len();
    let mut out = DMatrix::zeros(cols, rows);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > cutoff {
            let vi = vt.row(i).transpose();
            let ui = u.column(i);
            out += (vi * ui.transpose()) / s;
        }
    }
    out
}

/// Column blocks `[B, AB, ..., A^{kappa-1} B]`.
pub fn reachability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, kappa: usize) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(contract("A must be square"));
    }
    if b.nrows() != n {
        return Err(contract(format!("B has {} rows, expected {n}", b.nrows())));
    }
    if kappa == 0 {
        return Err(contract("kappa must be at least 1"));
    }
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, kappa * m);
    let mut block = b.clone();
    for i in 0..kappa {
        out.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * &block;
    }
    Ok(out)
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.clone().singular_values().max()
}

/// Smallest singular value (over `min(rows, cols)` values).
pub fn min_singular(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().min()
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn sym_eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    match m.nrows() {
        0 => (0.0, 0.0),
        1 => (m[(0, 0)], m[(0, 0)]),
        2 => {
            let (a, b, c) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            let hi = mean + rad;
            // Recover the small root from the determinant to avoid cancellation.
            let det = a * c - b * b;
            let lo = if hi != 0.0 { det / hi } else { mean - rad };
            (lo, hi)
        }
        _ => {
            let eig = m.clone().symmetric_eigen();
            (eig.eigenvalues.min(), eig.eigenvalues.max())
        }
    }
}

/// Symmetric positive semi-definite square root via eigendecomposition.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Integer matrix power (`A^0 = I`).
pub fn mat_pow(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut base = a.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        base = &base * &base;
        e >>= 1;
    }
    result
}

/// Build a matrix from row vectors, checking rectangularity.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(contract("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Inverse of [`from_rows`].
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Serde adapter storing matrices as arrays of rows.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter storing vectors as plain arrays.
pub mod serde_vec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sat_examples() {
        let v = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(sat(&v, 5.0).unwrap(), v);
        assert_eq!(sat(&DVector::from_vec(vec![3.0]), 1.0).unwrap()[0], 1.0);
        let s = sat(&DVector::from_vec(vec![6.0, 8.0]), 5.0).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-15 && (s[1] - 4.0).abs() < 1e-15);
        assert!(sat(&v, 0.0).is_err());
    }

    #[test]
    fn pinv_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert!((pinv(&i2) - &i2).norm() < 1e-14);
        assert_eq!(pinv(&DMatrix::from_element(1, 1, 2.0))[(0, 0)], 0.5);
        let z = pinv(&DMatrix::zeros(2, 3));
        assert_eq!(z.shape(), (3, 2));
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn reachability_examples() {
        let a = from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let b = from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(reachability_matrix(&a, &b, 1).unwrap(), b);
        let r = reachability_matrix(&a, &b, 2).unwrap();
        assert_eq!(r, from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap());
        let e1 = from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let r = reachability_matrix(&DMatrix::identity(2, 2), &e1, 3).unwrap();
        assert_eq!(r, from_rows(&[vec![1.0, 1.0, 1.0], vec![0.0, 0.0, 0.0]]).unwrap());
        assert!(reachability_matrix(&a, &b, 0).is_err());
        assert!(reachability_matrix(&a, &DMatrix::zeros(3, 1), 1).is_err());
    }

    #[test]
    fn eig_extremes_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![6.0, 1.0]));
        assert_eq!(sym_eig_extremes(&m), (1.0, 6.0));
    }
}
