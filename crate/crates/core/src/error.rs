use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected:?}, got {actual:?}")]
    Shape {
        op: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("{0}: non-finite value encountered")]
    NonFinite(String),

    #[error("{0}: backward called without a cached forward pass")]
    NoForwardCache(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient for parameter `{0}`")]
    NanGradient(String),

    #[error("label {label} out of range for task {task} ({classes} classes)")]
    LabelOutOfRange {
        task: String,
        label: usize,
        classes: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown variant `{given}`; valid variants: {valid}")]
    UnknownVariant { given: String, valid: String },

    #[error("tensor container {path}: {msg} (byte offset {offset})")]
    Format {
        path: String,
        offset: usize,
        msg: String,
    },

    #[error("manifest {path}, line {line}: {msg}")]
    Manifest {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            op: op.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for validation failures, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Diverged { .. } | Error::NonFinite(_) | Error::NanGradient(_) => 2,
            _ => 1,
        }
    }
}
