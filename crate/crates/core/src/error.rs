use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("mention {surface:?} refers to unknown entity {entity_id:?}")]
    DanglingEntity { surface: String, entity_id: String },

    #[error("test surfaces overlap train/KB surfaces: {}", .0.join(", "))]
    SplitOverlap(Vec<String>),

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("empty text at position {index}")]
    EmptyText { index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero vector has no cosine distance")]
    ZeroVector,

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("need at least {needed} classes with two or more samples, found {found}")]
    InsufficientClasses { needed: usize, found: usize },

    #[error("epoch {epoch}, batch {batch}: {source}")]
    Training {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("provider network failure after {attempts} attempts: {message}")]
    Network { attempts: usize, message: String },

    #[error("provider error: {0}")]
    Provider(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input data rather than a failing run.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::DanglingEntity { .. }
            | Error::SplitOverlap(_)
            | Error::InvalidCorpus(_)
            | Error::EmptyText { .. }
            | Error::EmptyInput(_)
            | Error::Corrupt(_)
            | Error::Version { .. }
            | Error::DimensionMismatch { .. }
            | Error::InsufficientClasses { .. } => true,
            Error::Io(e) => e.kind() == std::io::ErrorKind::NotFound,
            Error::Training { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
