use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("degenerate pair: atom index {0} paired with itself")]
    DegeneratePair(usize),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate feature: column {column} has zero variance")]
    DegenerateFeature { column: usize },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("simulation diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String },

    #[error("grid coverage: {0}")]
    GridCoverage(String),

    #[error("quadrature resolution: {0}")]
    Resolution(String),

    #[error("unsupported export: {0}")]
    UnsupportedExport(String),

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invariant violation in `{field}`: {msg}")]
    InvariantViolation { field: String, msg: String },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged { .. } => 3,
            Error::Config { .. }
            | Error::InvalidArgument(_)
            | Error::InvalidInput(_)
            | Error::SchemaMismatch(_)
            | Error::InvariantViolation { .. }
            | Error::Malformed(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
