//! Safeguarded Newton iteration inside a bracket.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RootError<E> {
    #[error("no sign change on [{0}, {1}]")]
    NoBracket(f64, f64),
    #[error("root finding did not converge")]
    NonConvergence,
    #[error("function failed: {0}")]
    Eval(E),
}

/// Solve `f(x) = 0` on `[lo, hi]`; `f` returns the value and derivative.
/// Newton steps that leave the bracket or shrink it too slowly are
/// replaced by bisection.
pub fn solve<E>(
    mut f: impl FnMut(f64) -> Result<(f64, f64), E>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, RootError<E>> {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let (fa, _) = f(a).map_err(RootError::Eval)?;
    let (fb, _) = f(b).map_err(RootError::Eval)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoBracket(a, b));
    }
    let neg_at_a = fa < 0.0;
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let (fx, dfx) = f(x).map_err(RootError::Eval)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx < 0.0) == neg_at_a {
            a = x;
        } else {
            b = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx != 0.0 && newton.is_finite() && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= tol * (1.0 + x.abs()) || (b - a) <= tol * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Err(RootError::NonConvergence)
}
