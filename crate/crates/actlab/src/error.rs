//! Crate-wide error type and exit-code mapping for the CLI.

use std::path::PathBuf;
use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Two matrices had incompatible shapes for the attempted operation.
    #[error("{op}: dimension mismatch: {lhs_rows}x{lhs_cols} vs {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    /// A scalar or structural argument was outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `taylor_coefficients` only estimates the series up to degree 3.
    #[error("unsupported series order {0}: coefficients are available up to order 3")]
    UnsupportedOrder(usize),

    /// A class label was not representable by the classifier head.
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    /// An activation name string did not match any known kind.
    #[error("unknown activation {0:?} (expected one of: sigmoid, scaled_sigmoid, tanh, penalized_tanh, relu, leaky_relu)")]
    UnknownActivation(String),

    /// An initialization-scheme name string did not match any known kind.
    #[error("unknown init scheme {0:?} (expected one of: fan_in, xavier, scaled_fan_in)")]
    UnknownInitScheme(String),

    /// A forward tape was replayed against a network it does not belong to.
    #[error("forward tape does not match network: {0}")]
    TapeMismatch(String),

    /// An IDX file started with the wrong magic number.
    #[error("{}: bad IDX magic: expected {expected:#010x}, found {found:#010x}", path.display())]
    IdxBadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    /// An IDX file ended before the declared payload.
    #[error("{}: truncated IDX file: {context}", path.display())]
    IdxTruncated { path: PathBuf, context: String },

    /// The image and label IDX files disagree on the sample count.
    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    /// A configuration file or flag could not be interpreted.
    #[error("config error: {0}")]
    Config(String),

    /// A saved model file was malformed.
    #[error("model file error: {0}")]
    ModelFormat(String),

    /// A verification command found an out-of-tolerance result.
    #[error("check failed: {0}")]
    CheckFailed(String),

    /// Training ended with a non-finite loss.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI.
    ///
    /// * 2 — configuration / argument errors
    /// * 3 — I/O and file-format errors
    /// * 4 — verification checks that ran but found violations
    /// * 5 — a training run that diverged (and nothing else went wrong)
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ShapeMismatch { .. }
            | Error::InvalidParameter(_)
            | Error::UnsupportedOrder(_)
            | Error::LabelOutOfRange { .. }
            | Error::UnknownActivation(_)
            | Error::UnknownInitScheme(_)
            | Error::TapeMismatch(_)
            | Error::Config(_) => 2,
            Error::IdxBadMagic { .. }
            | Error::IdxTruncated { .. }
            | Error::IdxCountMismatch { .. }
            | Error::ModelFormat(_)
            | Error::Io(_) => 3,
            Error::CheckFailed(_) => 4,
            Error::Diverged(_) => 5,
        }
    }
}
