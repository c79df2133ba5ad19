//! Debiased high-dimensional regression calibration for log-contrast
//! models whose compositional covariates carry multiplicative lognormal
//! measurement error.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod composition;
pub mod covariance;
pub mod error;
pub mod error_model;
pub mod inference;
pub mod linalg;
pub mod montecarlo;
pub mod normal;
pub mod sparse;

pub use error::{Error, Result};
