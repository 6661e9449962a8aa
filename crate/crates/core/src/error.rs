use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// The CLI maps these onto exit codes: configuration problems exit with 2,
/// violated run invariants with 3, everything else with 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("budget too small: {what} needs at least {needed} episodes, got {got}")]
    BudgetTooSmall { what: &'static str, needed: u64, got: u64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by a bad configuration or input file.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::BudgetTooSmall { .. } | Error::Json { .. })
    }

    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
