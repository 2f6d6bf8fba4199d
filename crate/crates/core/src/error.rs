use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SanError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SanError {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    Numeric { op: &'static str },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("vocab error: {0}")]
    Vocab(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("taxonomy error: {0}")]
    Taxonomy(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("search error: {0}")]
    Search(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SanError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        SanError::Dimension { op, detail: detail.into() }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        SanError::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SanError::Io { path: path.into(), source }
    }
}
