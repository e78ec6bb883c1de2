//! Spectral and Monte Carlo tools for branching diffusions with drift.
//!
//! - [`problem`]: model descriptors, envelope bounds and integrability checks.
//! - [`spectral`]: finite-difference discretization and the low spectrum.
//! - [`montecarlo`]: particle, weighted-path and conditioned-law simulation.
//! - [`verify`]: convergence checks that compare the two sides.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod montecarlo;
pub mod problem;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
