use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or dimension mismatch between operands.
    #[error("dimension error: {0}")]
    Dim(String),
    /// Invalid values: non-finite entries, constant targets, broken preconditions.
    #[error("domain error: {0}")]
    Domain(String),
    /// A coordinate fell outside its declared bounds.
    #[error("range error: coordinate {coord}: value {value} outside [{lo}, {hi}]")]
    Range {
        coord: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    /// Invalid argument (r out of range, k > M, D <= m, ...).
    #[error("argument error: {0}")]
    Argument(String),
    /// A CSV file does not conform to the documented schema.
    #[error("schema error in {file} at row {row}: {msg}")]
    Schema {
        file: String,
        row: usize,
        msg: String,
    },
    /// A CSV cell could not be parsed as a number.
    #[error("parse error in {file} at row {row}: {msg}")]
    Parse {
        file: String,
        row: usize,
        msg: String,
    },
    /// Cholesky factorization failed at every jitter level tried.
    #[error("factorization failed (final jitter tried: {jitter:e})")]
    Factorization { jitter: f64 },
    /// Rank-deficient linear system; resampling the feature map usually fixes it.
    #[error("singular system: {0}; resample the feature map (larger D or a new seed)")]
    Singular(String),
    /// Operation needs state the value does not carry.
    #[error("state error: {0}")]
    State(String),
    /// Operation not supported for this variant.
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Prefix the message with a context label, keeping the variant where possible.
    pub(crate) fn context(self, ctx: &str) -> Error {
        use Error::*;
        match self {
            Dim(m) => Dim(format!("{ctx}: {m}")),
            Domain(m) => Domain(format!("{ctx}: {m}")),
            Argument(m) => Argument(format!("{ctx}: {m}")),
            Singular(m) => Singular(format!("{ctx}: {m}")),
            State(m) => State(format!("{ctx}: {m}")),
            Unsupported(m) => Unsupported(format!("{ctx}: {m}")),
            other => other,
        }
    }
}
