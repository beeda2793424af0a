//! Small dense least squares and nullspace detection.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("rank deficient basis (pivot ratio {0:e})")]
    RankDeficient(f64),
    #[error("empty system")]
    Empty,
}

/// Relative pivot threshold below which a column set counts as dependent.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LstsqFit {
    pub x: DVector<f64>,
    /// Largest absolute residual of the fit.
    pub max_residual: f64,
    /// Smallest to largest |R_ii| after column scaling.
    pub pivot_ratio: f64,
}

/// Least squares via Householder QR of the column-scaled matrix.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LstsqFit, LinalgError> {
    let (m, n) = a.shape();
    if n == 0 || m < n {
        return Err(LinalgError::Empty);
    }
    let mut scaled = a.clone();
    let mut scales = vec![1.0; n];
    for j in 0..n {
        let nrm = scaled.column(j).norm();
        if nrm == 0.0 {
            return Err(LinalgError::RankDeficient(0.0));
        }
        scales[j] = nrm;
        scaled.column_mut(j).scale_mut(1.0 / nrm);
    }
    let qr = scaled.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..n).map(|i| r[(i, i)].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if dmax > 0.0 { dmin / dmax } else { 0.0 };
    if ratio < RANK_TOL {
        return Err(LinalgError::RankDeficient(ratio));
    }
    let qtb = qr.q().transpose() * b;
    let y = r.solve_upper_triangular(&qtb).ok_or(LinalgError::RankDeficient(ratio))?;
    let x = DVector::from_iterator(n, (0..n).map(|j| y[j] / scales[j]));
    let res = a * &x - b;
    let max_residual = res.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(LstsqFit { x, max_residual, pivot_ratio: ratio })
}

/// Smallest-to-largest singular value ratio and the matching unit right
/// singular vector.
pub fn null_direction(a: &DMatrix<f64>) -> Result<(f64, DVector<f64>), LinalgError> {
    let (m, n) = a.shape();
    if n == 0 || m == 0 {
        return Err(LinalgError::Empty);
    }
    let mut padded = a.clone();
    if m < n {
        padded = padded.resize_vertically(n, 0.0);
    }
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let (mut imin, mut smax) = (0, 0.0f64);
    for i in 0..s.len() {
        if s[i] < s[imin] {
            imin = i;
        }
        smax = smax.max(s[i]);
    }
    let ratio = if smax > 0.0 { s[imin] / smax } else { 0.0 };
    let mut v = vt.row(imin).transpose();
    // deterministic sign: largest component positive
    let mut big = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[big].abs() {
            big = i;
        }
    }
    if v[big] < 0.0 {
        v = -v;
    }
    Ok((ratio, v))
}
