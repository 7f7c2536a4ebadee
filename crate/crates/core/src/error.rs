use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("stream alignment error: {0}")]
    Alignment(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    /// The beam collapsed: no token survived the given frame.
    #[error("decode failure: no surviving token at frame {frame}")]
    DecodeFailure { frame: usize },

    #[error("insufficient speech: {0}")]
    InsufficientSpeech(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
