//! Adaptive Gauss-Kronrod (7/15) quadrature.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QuadError<E> {
    #[error("quadrature did not converge (estimated error {0:e})")]
    NonConvergence(f64),
    #[error("integrand failed: {0}")]
    Integrand(E),
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

fn gk15<E>(f: &mut dyn FnMut(f64) -> Result<f64, E>, a: f64, b: f64) -> Result<(f64, f64), E> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x)? + f(c + x)?;
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Ok((k * h, ((k - g) * h).abs()))
}

/// Integrate `f` over `[a, b]` until the estimated error is below
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, QuadError<E>> {
    if a == b {
        return Ok(0.0);
    }
    let f: &mut dyn FnMut(f64) -> Result<f64, E> = &mut f;
    let (i0, e0) = gk15(f, a, b).map_err(QuadError::Integrand)?;
    let mut parts = vec![(a, b, i0, e0)];
    let mut total = i0;
    let mut err = e0;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if parts.len() >= MAX_INTERVALS || !err.is_finite() {
            return Err(QuadError::NonConvergence(err));
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        let (lo, hi, iv, ev) = parts.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            return Err(QuadError::NonConvergence(err));
        }
        let (il, el) = gk15(f, lo, mid).map_err(QuadError::Integrand)?;
        let (ir, er) = gk15(f, mid, hi).map_err(QuadError::Integrand)?;
        total += il + ir - iv;
        err += el + er - ev;
        parts.push((lo, mid, il, el));
        parts.push((mid, hi, ir, er));
        if parts.len() % 64 == 0 {
            // refresh sums against drift
            total = parts.iter().map(|p| p.2).sum();
            err = parts.iter().map(|p| p.3).sum();
        }
    }
    Ok(parts.iter().map(|p| p.2).sum())
}
