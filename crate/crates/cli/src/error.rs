use std::path::PathBuf;

use escapade_core::{IntegrateError, LyapunovError, ProbeError, SignalError, SystemError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration at {path}: {message}")]
    ConfigInvalid { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("lyapunov: {0}")]
    Lyapunov(#[from] LyapunovError),
    #[error("integrator: {0}")]
    Integrate(#[from] IntegrateError),
    #[error("signal: {0}")]
    Signal(#[from] SignalError),
    #[error("system: {0}")]
    System(#[from] SystemError),
    #[error("probe: {0}")]
    Probe(#[from] ProbeError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ConfigInvalid { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn config(path: &str, message: impl Into<String>) -> Self {
        CliError::ConfigInvalid {
            path: path.to_string(),
            message: message.into(),
        }
    }
}
