//! Fixtures shared by the criterion benches.

use lbs_core::catalog::{self, Case};
use lbs_core::{parse, Expr};

/// A mid-sized expression mixing rational, exp and radical terms.
pub const MIXED: &str = "exp(beta*x)/sqrt(phi1*exp(beta*x) + phi2) + (u_x^2*u_xx - u*u_xxx)/(u^2 + 1) + ln(x^2 + 1)*u_x";

pub fn mixed() -> Expr {
    parse(MIXED).expect("fixture parses")
}

/// Bundled cases whose id matches `glob`.
pub fn cases(glob: &str) -> Vec<Case> {
    let all = catalog::bundled().expect("bundled catalog loads");
    catalog::select(&all, Some(glob)).into_iter().cloned().collect()
}
