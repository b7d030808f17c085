//! Bayesian mechanism design by black-box reduction: allocation algorithms
//! become incentive-compatible, individually rational mechanisms through
//! envy-free prices on per-agent fractional assignment problems.

pub mod algorithm;
pub mod assignment;
pub mod ca;
pub mod cli;
pub mod error;
pub mod interim;
pub mod mechanism;
pub mod model;
pub mod reduction_rr;
pub mod reduction_sw;
pub mod rng;
pub mod scalar;
pub mod simplex;
pub mod verify;

pub use error::{Error, Result};
