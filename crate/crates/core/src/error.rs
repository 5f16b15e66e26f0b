use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("source image {index} is {rows}x{cols}, need at least {need_rows}x{need_cols}")]
    SourceTooSmall {
        index: usize,
        rows: usize,
        cols: usize,
        need_rows: usize,
        need_cols: usize,
    },

    #[error("covariance has numerical rank {rank}, cannot retain {requested} dimensions")]
    RankDeficient { rank: usize, requested: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        /// Per-epoch trace up to the last finite epoch.
        trace: Vec<Vec<f64>>,
    },

    #[error("not fitted: {0}")]
    NotFitted(String),

    #[error("malformed VTB data: {0}")]
    Format(String),

    #[error("malformed manifest {path}: line {line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::shape(format!("{what}: length {got}, expected {want}")));
    }
    Ok(())
}
