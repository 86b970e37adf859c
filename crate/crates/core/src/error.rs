use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {what} needs {requested}, budget is {budget}")]
    Capacity {
        what: &'static str,
        requested: u128,
        budget: u128,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("malformed pattern: {0}")]
    MalformedPattern(String),

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("configuration did not stabilize: site {site} toppled {count} times (budget {budget}, {total} topplings in total)")]
    NonStabilizable {
        site: usize,
        count: u64,
        budget: u64,
        total: u64,
    },

    #[error("toppling matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("solver residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("site {0} is outside the volume")]
    SiteOutOfRange(usize),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
