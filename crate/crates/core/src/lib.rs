//! Petrov–Galerkin finite elements for two-point boundary value problems with
//! a Riemann–Liouville or Caputo fractional derivative of order α ∈ (1, 2).
//!
//! The crate works almost entirely in closed form: functions are finite sums
//! of truncated powers ([`fracpoly::PowerSum`]) on which fractional integrals
//! and derivatives act term by term, and the stiffness matrix on a uniform
//! mesh is an explicit Toeplitz expression. Quadrature is used for loads with
//! non-polynomial sources, for error norms, and as an independent oracle.

pub mod analytic;
pub mod assembly;
pub mod error;
pub mod femspace;
pub mod fracpoly;
pub mod harness;
pub mod metrics;
pub mod quadrature;
pub mod special;

pub use error::{FracError, Result};
