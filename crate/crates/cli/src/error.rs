use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Simulation(#[from] hopsim_core::Error),
    #[error("run produced no results")]
    EmptyRun,
}

impl RunError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        RunError::Config { key: key.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config { .. } | RunError::Io { .. } => 2,
            RunError::Simulation(hopsim_core::Error::InvalidConfig(_)) => 2,
            RunError::Simulation(hopsim_core::Error::ParamsMismatch { .. } | hopsim_core::Error::GaitFile(_)) => 2,
            RunError::Simulation(_) => 3,
            RunError::EmptyRun => 1,
        }
    }
}
