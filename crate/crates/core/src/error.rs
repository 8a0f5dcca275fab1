use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("wells without a feature row: {}", .missing.join(", "))]
    Coverage { missing: Vec<String> },

    #[error("index out of range: {what} {index} (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate pair: observed and unobserved well are both {0}")]
    DegeneratePair(usize),

    #[error("no company has both observed and unobserved wells")]
    Saturated,

    #[error("non-finite value during training at epoch {epoch}: {message}")]
    Numeric { epoch: usize, message: String },

    #[error("model format error: {0}")]
    Format(String),

    #[error("model format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("degenerate labels: precision-recall needs both relevant and irrelevant items")]
    DegenerateLabels,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
