use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: axis {axis} expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid shape in {op}: {message}")]
    Shape { op: &'static str, message: String },

    #[error("non-finite value produced by {context}")]
    NonFinite { context: String },

    #[error("loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input resolution {height}x{width} does not survive layer {layer}")]
    ResolutionTooSmall {
        layer: String,
        height: usize,
        width: usize,
    },

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("bad magic in {path}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: String,
        expected: [u8; 4],
        found: Vec<u8>,
    },

    #[error("truncated payload in {path}: needed {needed} bytes, had {available}")]
    Truncated {
        path: String,
        needed: usize,
        available: usize,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },

    #[error("AUC undefined: {positives} positive and {negatives} negative frames")]
    UndefinedAuc { positives: usize, negatives: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("unknown ablation axis `{0}`")]
    UnknownAxis(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        let path = path.as_ref();
        if source.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingFile(path.to_path_buf());
        }
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn shape(op: &'static str, message: impl Into<String>) -> Self {
        Error::Shape {
            op,
            message: message.into(),
        }
    }

    /// Whether this error stems from user-supplied configuration rather than
    /// runtime conditions. Used by the CLI to pick an exit code.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Json(_) | Error::UnknownAxis(_) | Error::ResolutionTooSmall { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
