//! Classic fourth-order Runge-Kutta with successive step halving.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OdeError {
    #[error("no convergence after {0} steps (difference {1:e})")]
    NonConvergence(usize, f64),
    #[error("non-finite state at t = {0}")]
    Blowup(f64),
}

fn rk4_path(f: &dyn Fn(f64, &[f64]) -> Vec<f64>, t0: f64, y0: &[f64], t1: f64, n: usize) -> Result<Vec<Vec<f64>>, OdeError> {
    let h = (t1 - t0) / n as f64;
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(n + 1);
    out.push(y.clone());
    let axpy = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    for i in 0..n {
        let t = t0 + i as f64 * h;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &axpy(&y, &k1, 0.5 * h));
        let k3 = f(t + 0.5 * h, &axpy(&y, &k2, 0.5 * h));
        let k4 = f(t + h, &axpy(&y, &k3, h));
        for j in 0..y.len() {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::Blowup(t + h));
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// States at `n0` equally spaced nodes on `[t0, t1]` (plus the start),
/// refined by halving the step until two successive refinements agree to
/// `tol` at every node.
pub fn integrate_refined(
    f: &dyn Fn(f64, &[f64]) -> Vec<f64>,
    t0: f64,
    y0: &[f64],
    t1: f64,
    n0: usize,
    tol: f64,
) -> Result<Vec<(f64, Vec<f64>)>, OdeError> {
    let mut n = n0.max(1);
    let mut prev = rk4_path(f, t0, y0, t1, n)?;
    let mut diff = f64::INFINITY;
    for _ in 0..16 {
        let fine = rk4_path(f, t0, y0, t1, 2 * n)?;
        diff = 0.0;
        for i in 0..=n {
            for (a, b) in prev[i].iter().zip(&fine[2 * i]) {
                diff = diff.max((a - b).abs() / (1.0 + b.abs()));
            }
        }
        n *= 2;
        prev = fine;
        if diff < tol {
            let h = (t1 - t0) / n as f64;
            let stride = n / n0.max(1);
            return Ok((0..=n0.max(1)).map(|i| (t0 + (i * stride) as f64 * h, prev[i * stride].clone())).collect());
        }
    }
    Err(OdeError::NonConvergence(n, diff))
}
