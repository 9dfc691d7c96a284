use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the simulator, trainer and experiment runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Index outside a table or collection.
    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    /// Malformed input file; carries the offending line when known.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Non-finite value encountered during training.
    #[error("numerical error: {0}")]
    Numeric(String),

    /// Evaluation over an empty or unusable dataset.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Filesystem failure, with the path involved.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code category for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) => 2,
            Error::Config(_) => 3,
            Error::Index { .. } => 4,
            Error::Parse { .. } => 5,
            Error::Numeric(_) => 6,
            Error::Evaluation(_) => 7,
            Error::Io { .. } => 8,
        }
    }
}
