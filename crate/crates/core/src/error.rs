use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the planning stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid configuration: field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("empty utility vector")]
    EmptyUtilities,

    #[error("dimension mismatch: table has {table} dimensions, query has {query}")]
    DimensionMismatch { table: usize, query: usize },

    #[error("stage {stage} out of range (horizon has {stages} stages)")]
    StageOutOfRange { stage: usize, stages: usize },

    #[error("non-finite reward at stage {stage}, cell {cell} (leader action {leader}, follower action {follower})")]
    NonFiniteReward {
        stage: usize,
        cell: usize,
        leader: usize,
        follower: usize,
    },

    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),

    #[error("value table format: {0}")]
    Format(String),

    #[error("unsupported value table version {found}, expected version {expected}")]
    Version { found: u32, expected: u32 },

    #[error("length mismatch: expected {expected} controls, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("optimizer produced a non-finite objective: {0}")]
    NonFiniteObjective(String),

    #[error("missing value table for planner `{0}`")]
    MissingValueTable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
