use thiserror::Error;

pub type Result<T> = std::result::Result<T, GlocalError>;

#[derive(Debug, Error)]
pub enum GlocalError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported model file version: {0}")]
    Version(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GlocalError {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        GlocalError::Parse {
            line,
            msg: msg.into(),
        }
    }
}
