use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter `{0}` is not on the tape")]
    DetachedParameter(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("{path}: bad magic bytes (expected EMB1)")]
    BadMagic { path: PathBuf },

    #[error("{path}: truncated payload ({actual} bytes, header declares {expected})")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: dimensions {rows}x{cols} overflow the addressable size")]
    DimensionOverflow { path: PathBuf, rows: u32, cols: u32 },

    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("clip {clip_id}: {detail}")]
    Manifest { clip_id: String, detail: String },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("normal matrix is singular at lambda = {lambda}; use lambda > 0")]
    SingularSystem { lambda: f64 },

    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite loss (first clip {clip_id})")]
    Divergence {
        epoch: usize,
        batch: usize,
        clip_id: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than by the inputs' form.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::Divergence { .. }
                | Error::SingularSystem { .. }
                | Error::UndefinedCorrelation(_)
        )
    }
}
