use std::path::PathBuf;

use mivit_autodiff::TensorError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Format { .. } | Error::Data(_) | Error::Label(_) | Error::Capability(_) => 3,
            Error::Tensor(TensorError::NonFinite { .. }) | Error::NonFinite(_) => 4,
            Error::Tensor(_) => 3,
            Error::Io { .. } => 5,
        }
    }
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
