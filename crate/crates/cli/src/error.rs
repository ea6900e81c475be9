use std::path::PathBuf;

use percolab_core::Error as CoreError;
use thiserror::Error;

/// Failures of a CLI run. Configuration problems exit with 2, everything
/// else with 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{0}")]
    Runtime(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub(crate) fn config_error(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_owned(),
        reason: reason.into(),
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { name, reason } => CliError::Config {
                field: name.to_owned(),
                reason,
            },
            CoreError::InvalidConnectionFunction(reason) => CliError::Config {
                field: "phi".to_owned(),
                reason,
            },
            other => CliError::Runtime(other.to_string()),
        }
    }
}
