//! Library side of the experiment harness: the tuning/robustness pipeline,
//! report rendering, and the command implementations used by the `tsa`
//! binary and the acceptance suite.

pub mod commands;
pub mod error;
pub mod pipeline;
pub mod report;

pub use error::CliError;
pub use pipeline::{ExperimentConfig, OptimizerKind, TuneOutcome};
