use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or out-of-range settings supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data that fails validation (negative densities, bad CSV rows, ...).
    #[error("ingestion error: {0}")]
    Ingest(String),

    /// A point lookup outside the enclosing rectangle.
    #[error("domain error: point ({x}, {y}) lies outside [{x0}, {x1}] x [{y0}, {y1}]")]
    Domain {
        x: f64,
        y: f64,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },

    /// Cell-wise ordering such as `f_I <= f_P` was broken.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Numerical degeneracy: zero-mass kernels, zero sample sizes, too few positions.
    #[error("degenerate computation: {0}")]
    Degenerate(String),

    #[error("replication {index}: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by the command-line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Computation,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::Ingest(_) | Error::Invariant(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => ErrorKind::Data,
            Error::Domain { .. } | Error::Degenerate(_) => ErrorKind::Computation,
            Error::Replication { source, .. } => source.kind(),
        }
    }

    pub(crate) fn in_replication(self, index: usize) -> Error {
        Error::Replication {
            index,
            source: Box::new(self),
        }
    }
}
