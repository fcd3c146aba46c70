use bowlforge::speed::SpeedError;
use std::io;

/// Failure of a subcommand, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// An invariant or cross-check failed; reports have already been written.
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Parse(String),
    #[error("speed is not admissible: {0}")]
    Admissibility(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("could not serialize report: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Admissibility(_) => 3,
            CliError::Numerical(_) | CliError::Io { .. } | CliError::Json(_) => 4,
        }
    }

    /// Sorts a failure to build a speed into syntax problems and speeds that are not admissible.
    pub fn from_speed(err: SpeedError) -> Self {
        let err = bowlforge::Error::from(err);
        if err.is_parse_error() {
            CliError::Parse(err.to_string())
        } else {
            CliError::Admissibility(err.to_string())
        }
    }

    pub fn numerical(err: impl Into<bowlforge::Error>) -> Self {
        CliError::Numerical(err.into().to_string())
    }
}
