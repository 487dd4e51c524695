//! Experiment harness for the `tekfac` optimizers: config files, datasets,
//! training runs, Fisher diagnostics and the built-in verification suite.

// Validation writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod training;
pub mod verify;

pub use config::{ExperimentConfig, Overrides};
pub use error::{HarnessError, Result};
