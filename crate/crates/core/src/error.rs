use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A theorem precondition on the problem constants or schedule parameters is violated.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("certificate unavailable: {0}")]
    CertificateUnavailable(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

impl Error {
    /// Process exit code: 1 for bad input or unmet preconditions, 2 for
    /// numerical or I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged(_) | Error::Io(_) => 2,
            _ => 1,
        }
    }
}
