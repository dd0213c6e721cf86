use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A module precondition was violated by the caller.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Experiment or simulation configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
