use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("ordering error: timestamp {got} does not follow {last}")]
    Ordering { last: f64, got: f64 },

    #[error("not ready: {0}")]
    NotReady(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("corruption error: {0}")]
    Corruption(String),

    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("session error: {0}")]
    Session(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
