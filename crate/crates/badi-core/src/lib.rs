//! Construction and evaluation of the balanced Area Deprivation Index.
//!
//! The pipeline runs census block-group ingestion, reliability filtering,
//! geographically nested kNN imputation, factor-analytic index scoring, and
//! geographic ranking, plus the evaluation harness: correlation
//! benchmarking against outcome tables and covariate-adjusted GLM
//! contrasts of cost and utilization across deprivation quintiles.
//! Synthetic census and beneficiary generators stand in for restricted
//! source data.

// matrix kernels index rows and columns directly
#![allow(clippy::needless_range_loop)]

pub mod benchmark;
pub mod census;
pub mod error;
pub mod geo;
pub mod glm;
pub mod impute;
pub mod index;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use geo::GeoId;
