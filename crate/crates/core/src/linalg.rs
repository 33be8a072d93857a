//! Small dense-matrix helpers shared by the information computations.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Smallest eigenvalue of `a - b` for symmetric `a`, `b`.
pub fn loewner_min_eigenvalue(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    min_eigenvalue(&symmetrize(&(a - b)))
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest entry of `|a - a^T|` relative to the largest entry of `a`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    (a - a.transpose()).amax() / scale
}

pub fn matrix_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().cloned().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map(|v| v.len()).unwrap_or(0);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(a))
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

pub fn inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    a.clone().try_inverse().ok_or_else(|| Error::Numerical(format!("{what} is singular")))
}

/// Sample covariance of row vectors about `center` (their mean when `None`).
pub fn empirical_covariance(rows: &[Vec<f64>], center: Option<&[f64]>) -> DMatrix<f64> {
    let q = rows.first().map(|r| r.len()).unwrap_or(0);
    let n = rows.len();
    let mean: Vec<f64> = match center {
        Some(c) => c.to_vec(),
        None => (0..q).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect(),
    };
    let denom = if center.is_some() { n as f64 } else { (n.max(2) - 1) as f64 };
    DMatrix::from_fn(q, q, |i, j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / denom)
}

/// Serialises a matrix as a list of rows.
pub fn serialize_matrix<S: serde::Serializer>(a: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&matrix_rows(a), s)
}

pub fn serialize_opt_matrix<S: serde::Serializer>(a: &Option<DMatrix<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&a.as_ref().map(matrix_rows), s)
}
