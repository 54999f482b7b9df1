use alloc::string::String;
use core::fmt;

/// Errors raised by the demixing core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or operator had the wrong size for the call.
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },
    /// The operation is not defined for this atomic set variant.
    Unsupported(&'static str),
    /// An argument violated a documented precondition.
    InvalidArgument(String),
    /// The exposing functional was zero, so no face is defined.
    ZeroExposingVector,
    /// Non-finite arithmetic or a numerical routine that failed to converge.
    Numerical {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
}

impl Error {
    pub(crate) fn dim(expected: usize, found: usize, context: &'static str) -> Self {
        Error::DimensionMismatch {
            expected,
            found,
            context,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                expected,
                found,
                context,
            } => write!(
                f,
                "dimension mismatch in {context}: expected {expected}, found {found}"
            ),
            Error::Unsupported(what) => write!(f, "unsupported operation: {what}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ZeroExposingVector => write!(f, "face undefined for the zero functional"),
            Error::Numerical {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "numerical failure in {what} after {iterations} iterations (residual {residual:e})"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
