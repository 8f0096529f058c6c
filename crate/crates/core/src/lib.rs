//! Weakly supervised trip-purpose inference for GPS staypoints.
//!
//! The crate turns raw ping streams into staypoints, labels each one with one of 15
//! activity types plus a confidence score, measures how well the inferred distributions
//! agree with survey reference statistics, calibrates its parameters with staged NSGA-II
//! runs, and reports label stability under positional noise and POI loss.

pub mod calibration;
pub mod error;
pub mod ingest;
pub mod mandatory;
pub mod metrics;
pub mod model;
pub mod nonmandatory;
pub mod nsga;
pub mod pipeline;
pub mod robustness;
pub mod spatial;
pub mod staypoints;
pub mod zones;

pub use error::{Error, Result};
