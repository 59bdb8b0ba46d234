//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Trace file is structurally broken before any record is read
    /// (missing or malformed header, wrong column set).
    #[error("{0}")]
    Header(String),

    /// A data row failed to parse or validate. Rows are numbered from 1,
    /// counting data rows only (header and comment lines excluded).
    #[error("{msg}, row {row}")]
    Row { row: usize, msg: String },

    /// A trace with no records was handed to an operation that needs data.
    #[error("empty trace")]
    EmptyTrace,

    /// Exact integer cost arithmetic left the u64 range. Never wraps.
    #[error("cost arithmetic overflow")]
    Overflow,

    #[error("unknown warp model `{0}`")]
    UnknownWarpModel(String),

    #[error("unknown report format `{0}`")]
    UnknownFormat(String),

    /// A precondition on an operation's inputs does not hold.
    #[error("{0}")]
    InvalidInput(String),

    /// Network construction could not complete (unroutable tensor,
    /// concat over mismatched sizes, group without input).
    #[error("{0}")]
    Construction(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn construction(msg: impl Into<String>) -> Self {
        Error::Construction(msg.into())
    }
}
