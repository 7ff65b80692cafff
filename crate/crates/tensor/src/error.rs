use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    /// Shape or extent mismatch between operands.
    #[error("{op}: {msg}")]
    Dim { op: &'static str, msg: String },

    /// An operation produced NaN or infinity from finite inputs.
    #[error("{op}: non-finite value in result")]
    NonFinite { op: &'static str },

    /// A class label fell outside `0..classes`.
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    /// `backward` was invoked on a non-scalar value.
    #[error("backward requires a scalar, got shape {shape:?}")]
    BackwardNonScalar { shape: Vec<usize> },

    /// `backward` was invoked twice on the same tape.
    #[error("backward already ran on this graph; build a fresh graph instead")]
    BackwardTwice,

    /// Parameter / gradient / optimizer-state sets disagree.
    #[error("parameter set mismatch: {0}")]
    ParamMismatch(String),

    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),

    #[error("unknown parameter name {0:?}")]
    UnknownName(String),
}

impl TensorError {
    pub(crate) fn dim(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Dim { op, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;
