use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input in {file}:{line}: {reason}")]
    MalformedInput {
        file: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("numeric error at layer {layer}: {reason}")]
    LayerNumeric { layer: usize, reason: String },
    #[error("numeric error at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("experiment error: {0}")]
    Experiment(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
