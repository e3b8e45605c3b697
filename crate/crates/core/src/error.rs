//! Error type shared by all modules.

use std::fmt;

/// Errors reported by construction and analysis operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter violated its numeric domain (sign, range, finiteness).
    Domain {
        /// Name of the offending parameter.
        name: &'static str,
        /// Why the value was rejected.
        reason: String,
    },
    /// Two spectral objects were sampled on incompatible grids.
    GridMismatch { expected: usize, actual: usize },
    /// The operation has no solution for this filter or weight.
    Degenerate(String),
    /// A normal-equation system could not be solved reliably.
    Singular(String),
}

impl Error {
    pub(crate) fn domain(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            name,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { name, reason } => write!(f, "invalid `{name}`: {reason}"),
            Error::GridMismatch { expected, actual } => {
                write!(f, "grid size mismatch: expected {expected}, got {actual}")
            }
            Error::Degenerate(msg) => write!(f, "degenerate problem: {msg}"),
            Error::Singular(msg) => write!(f, "singular system: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
