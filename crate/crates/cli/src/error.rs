use std::path::PathBuf;

use thiserror::Error;

use rckf_core::scenario::ScenarioError;

/// Failure classes of the harness, each with a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("input file {path}: {reason}")]
    Input { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("{filter} diverged at step {step}: {reason}")]
    Divergence { filter: String, step: usize, reason: String },
    #[error("all {0} experiment cells failed")]
    NoCellSucceeded(usize),
}

impl CliError {
    /// 2: config, usage or file problem; 3: truth simulation; 4: filter
    /// divergence; 5: every experiment cell failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Input { .. } | CliError::Io { .. } => 2,
            CliError::Simulation(_) => 3,
            CliError::Divergence { .. } => 4,
            CliError::NoCellSucceeded(_) => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

/// Errors raised after the config validated are simulation failures.
pub(crate) fn simulation(err: ScenarioError) -> CliError {
    match err {
        ScenarioError::InvalidConfig { .. } | ScenarioError::InvalidWindow(_) => CliError::Config(err.to_string()),
        other => CliError::Simulation(other.to_string()),
    }
}
