//! Numeric kernels: quadrature, root finding, dense least squares and ODE
//! integration.

pub mod linalg;
pub mod ode;
pub mod quad;
pub mod root;
