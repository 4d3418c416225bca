//! Simulation-based calibration and posterior recalibration.
//!
//! The crate simulates datasets from a generative model, fits each with a
//! posterior sampler, checks whether the true parameter looks like a draw
//! from the fitted posterior, and estimates adjustments that repair
//! miscalibrated posteriors.

pub mod analytic;
pub mod error;
pub mod exec;
pub mod io;
pub mod model;
pub mod recal;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod sbc;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
