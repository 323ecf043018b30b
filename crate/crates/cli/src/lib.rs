//! Command-line harness: scenario simulation, single-filter estimation,
//! the CKF/RCKF comparison matrix and update timing.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use commands::{cmd_bench, cmd_estimate, cmd_experiment, cmd_simulate, ExperimentOutcome, GlobalOpts};
pub use error::CliError;
