use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad category of a failure, used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent input data.
    Data,
    /// A numerical routine could not produce a result.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error in record {record}, field `{field}`: {message}")]
    Validation {
        record: String,
        field: &'static str,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("empty selection: {0}")]
    EmptySet(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("bad container magic: expected \"ACTD\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),

    #[error("unsupported tensor dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("tensor dimensions overflow: {0:?}")]
    DimensionOverflow(Vec<u32>),

    #[error("truncated payload: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },

    #[error("bad container metadata: {0}")]
    Metadata(String),

    #[error("ill-conditioned problem: {0}")]
    Conditioning(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Conditioning(_) | Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    /// Stable code distinguishing container read failures.
    pub fn container_code(&self) -> Option<u8> {
        match self {
            Error::BadMagic(_) => Some(1),
            Error::UnsupportedVersion(_) => Some(2),
            Error::UnsupportedDtype(_) => Some(3),
            Error::DimensionOverflow(_) => Some(4),
            Error::Truncated { .. } => Some(5),
            Error::Metadata(_) => Some(6),
            _ => None,
        }
    }
}
