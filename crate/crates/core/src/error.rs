//! Error type shared by every module of the crate.

use thiserror::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A function was evaluated outside of its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke a documented precondition, such as asking for the debt
    /// cost of a stream that is not a debt contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid payment stream: {0}")]
    InvalidStream(String),

    #[error("invalid prospect: {0}")]
    InvalidProspect(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("subject `{0}` has no covariate vector")]
    MissingCovariates(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    /// Malformed input file. `line` is 1-based and counts the header.
    #[error("{path}: line {line}: {message}")]
    Schema { path: String, line: usize, message: String },

    #[error("unknown catalog entry: MPL {mpl_id} row {row}")]
    UnknownCatalogRow { mpl_id: u8, row: u32 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("root search failed: {0}")]
    NoBracket(String),

    #[error("incompatible models: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
