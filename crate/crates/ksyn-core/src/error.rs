//! Error type shared by all core modules.

use alloc::string::String;

/// Errors reported by core operations.
///
/// Variants carry enough structure to point at the offending input;
/// operations never panic on bad data.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input sample was NaN or infinite. `index` is the first offending
    /// flat index in row-major order.
    NonFinite { context: &'static str, index: usize },
    /// Operand shapes do not agree.
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },
    /// A scalar argument or configuration field is outside its domain.
    InvalidArgument {
        context: &'static str,
        message: String,
    },
    /// The spectrum's centering flag is wrong for this operation.
    WrongCentering {
        context: &'static str,
        expected_centered: bool,
    },
    /// Quadrant shifts require even grids.
    OddDimensions { h: usize, w: usize },
    /// Training diverged; the message names the last finite iteration.
    Diverged { context: &'static str, message: String },
}

impl core::fmt::Display for Error {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Error::NonFinite { context, index } => {
                write!(f, "{context}: non-finite value at flat index {index}")
            }
            Error::ShapeMismatch {
                context,
                expected,
                actual,
            } => write!(f, "{context}: shape mismatch, expected {expected}, got {actual}"),
            Error::InvalidArgument { context, message } => {
                write!(f, "{context}: {message}")
            }
            Error::WrongCentering {
                context,
                expected_centered,
            } => {
                if *expected_centered {
                    write!(f, "{context}: spectrum must be centered (call fftshift first)")
                } else {
                    write!(f, "{context}: spectrum must be uncentered (call ifftshift first)")
                }
            }
            Error::OddDimensions { h, w } => {
                write!(f, "quadrant shift requires even dimensions, got {h}x{w}")
            }
            Error::Diverged { context, message } => write!(f, "{context}: diverged ({message})"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(context: &'static str, message: impl Into<String>) -> Error {
    Error::InvalidArgument {
        context,
        message: message.into(),
    }
}

pub(crate) fn shape_mismatch(
    context: &'static str,
    expected: impl Into<String>,
    actual: impl Into<String>,
) -> Error {
    Error::ShapeMismatch {
        context,
        expected: expected.into(),
        actual: actual.into(),
    }
}
