use thiserror::Error;

/// Errors raised by tensor construction, graph operations and checkpoint I/O.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape for {op}: {reason}")]
    Shape { op: &'static str, reason: String },
    #[error("numeric error in {op}: {reason}")]
    Numeric { op: &'static str, reason: String },
    #[error("invalid input to {op}: {reason}")]
    Input { op: &'static str, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn shape_err(op: &'static str, reason: impl Into<String>) -> TensorError {
    TensorError::Shape {
        op,
        reason: reason.into(),
    }
}

pub(crate) fn input_err(op: &'static str, reason: impl Into<String>) -> TensorError {
    TensorError::Input {
        op,
        reason: reason.into(),
    }
}
