use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("record {index} ({id:?}) has dimension {actual}, expected {expected}")]
    RecordDimension {
        index: usize,
        id: String,
        expected: usize,
        actual: usize,
    },

    #[error("embedding must have at least one coordinate")]
    EmptyEmbedding,

    #[error("embedding coordinate {position} is not finite")]
    NonFinite { position: usize },

    #[error("zero-norm vector: cosine distance is undefined")]
    ZeroVector,

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("document id must be non-empty (record {0})")]
    EmptyId(usize),

    #[error("index is empty")]
    EmptyIndex,

    #[error("k must be at least 1")]
    InvalidK,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("snapshot format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },

    #[error("snapshot is truncated")]
    Truncated,

    #[error("snapshot checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("snapshot is malformed: {0}")]
    Corrupt(String),

    #[error("evaluation references unknown document id {0:?}")]
    MissingExpected(String),

    #[error("plot rendering failed: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable tag for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } | Error::RecordDimension { .. } => "dimension_mismatch",
            Error::EmptyEmbedding | Error::NonFinite { .. } => "invalid_embedding",
            Error::ZeroVector => "zero_vector",
            Error::DuplicateId(_) => "duplicate_id",
            Error::EmptyId(_) => "empty_id",
            Error::EmptyIndex => "empty_index",
            Error::InvalidK => "invalid_k",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Truncated => "truncated",
            Error::Checksum { .. } => "checksum",
            Error::Corrupt(_) => "corrupt",
            Error::MissingExpected(_) => "missing_expected",
            Error::Plot(_) => "plot",
            Error::Io(_) => "io",
        }
    }
}
