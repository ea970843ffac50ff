use thiserror::Error;

#[derive(Debug, Error)]
pub enum ComputeError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("missing gradient for trainable parameter {0}")]
    MissingGradient(String),
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint")]
    TruncatedCheckpoint,
    #[error("checkpoint parameter {name}: expected shape {expected:?}, found {found:?}")]
    ParameterShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint is missing parameter {0}")]
    MissingParameter(String),
    #[error("checkpoint contains unexpected parameter {0}")]
    UnexpectedParameter(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ComputeError>;
