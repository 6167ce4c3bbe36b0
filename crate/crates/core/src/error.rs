//! Crate-wide error type.
//!
//! Errors split into two families that the CLI maps onto exit codes:
//! configuration errors (bad flags, inconsistent roles, invalid grids) and
//! data errors (malformed input, schema mismatches, evidence the model
//! assigns zero probability).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad flag values, inconsistent role assignment,
    /// degenerate splits, empty grids.
    #[error("config error: {0}")]
    Config(String),

    /// Input schema problem: a mapped column or attribute is missing or has
    /// the wrong kind.
    #[error("schema error: {0}")]
    Schema(String),

    /// A specific input row could not be parsed.
    #[error("row error at line {line}: {message}")]
    Row { line: u64, message: String },

    /// The model assigns zero probability to the observations of a slice.
    /// `slice` is 1-based.
    #[error("impossible evidence in trace {case_id} at slice {slice}")]
    ImpossibleEvidence { case_id: String, slice: usize },

    /// A stored model file is malformed or has an unsupported version.
    #[error("model format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI reports for this error: 1 for configuration
    /// problems, 2 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
