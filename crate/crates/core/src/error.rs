use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic in {0}")]
    BadMagic(String),

    #[error("unsupported {format} version {version}")]
    Version { format: &'static str, version: u32 },

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("label out of range: {label} (catalog has {classes} classes)")]
    LabelOutOfRange { label: u32, classes: usize },

    #[error("dimension mismatch on line {line}: expected {expected} values, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },

    #[error("duplicate name: {0}")]
    DuplicateName(String),

    #[error("unknown class: {0}")]
    UnknownClass(String),

    #[error("cannot resolve embedding for {name:?}: token {token:?} not in table")]
    Unresolvable { name: String, token: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the root cause is a numeric failure (NaN/Inf).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite(_) => true,
            Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

/// Prefixes errors with the name of the pipeline stage that produced them.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
