use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the command line, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("config file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {message}", path.display())]
    Syntax { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Constraint(String),
    #[error("run failed: {0}")]
    RunFailure(String),
    #[error("oracle did not converge: {0}")]
    NonConvergence(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 0 is success and 2 is reserved for argument errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::MissingFile(_) => 3,
            CliError::Syntax { .. } => 4,
            CliError::Constraint(_) => 5,
            CliError::RunFailure(_) => 6,
            CliError::NonConvergence(_) => 7,
        }
    }
}

impl From<qvec::Error> for CliError {
    fn from(e: qvec::Error) -> Self {
        match e {
            qvec::Error::Constraint(m) | qvec::Error::Validation(m) => CliError::Constraint(m),
            other => CliError::RunFailure(other.to_string()),
        }
    }
}
