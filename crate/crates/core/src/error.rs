use thiserror::Error;

/// Errors produced anywhere in the copula / transport pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("degenerate column {column}: fewer than two distinct values")]
    DegenerateColumn { column: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot project onto uniform margins: {0}")]
    InfeasibleProjection(String),

    #[error("no convergence after {iters} iterations (residual {residual:e}, last value {last_value:?})")]
    ConvergenceFailure {
        iters: usize,
        residual: f64,
        last_value: Option<f64>,
    },

    #[error(
        "numerical underflow in scaling iterations at lambda={lambda}; retry in the log domain"
    )]
    UnderflowDetected { lambda: f64 },

    #[error("exact transport oracle limited to {limit} support cells, got {support}")]
    OracleTooLarge { support: usize, limit: usize },

    #[error("histogram is at zero distance from both a target and a forget copula")]
    AmbiguousSpec,

    #[error("pair ({i}, {j}): {source}")]
    Pair {
        i: usize,
        j: usize,
        source: Box<Error>,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// The underlying error, looking through pair annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pair { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
