use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] swinseg_tensor::TensorError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parameter {0:?} missing from the provided set")]
    MissingParam(String),

    #[error("parameter {name:?} has shape {got:?}, expected {expected:?}")]
    ShapeConflict { name: String, expected: Vec<usize>, got: Vec<usize> },

    #[error("parameter set contains entries the model does not use: {0:?}")]
    UnusedParams(Vec<String>),
}

pub type Result<T> = std::result::Result<T, ModelError>;
