//! Special functions and adaptive quadrature.
//!
//! Everything here is a pure function of its arguments; the beta-KL ground
//! truth and the quadrature oracles in the test suites are built on it.

mod quadrature;
mod special;

pub use quadrature::{integrate_adaptive, QuadratureResult};
pub use special::{digamma, log_beta, log_gamma};
