//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its valid range (non-positive scale, β ∉ (0,1), …).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A privacy budget lies outside the domain a mechanism or lemma supports.
    #[error("privacy budget out of range: {0}")]
    BudgetOutOfRange(String),

    /// A hypothesis of a privacy theorem does not hold; accounting refuses
    /// rather than under-reporting the privacy loss.
    #[error("accounting assumption violated: {0}")]
    AssumptionViolated(String),

    /// A selection was requested that would contain no coordinates.
    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Malformed or unusable input data (files, configs, datasets).
    #[error("input error: {0}")]
    Input(String),

    /// An internal invariant was broken; indicates a bug, not bad input.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
