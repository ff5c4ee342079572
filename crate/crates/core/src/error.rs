use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: invalid manifest: {source}", path.display())]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch for {subject}: expected {expected}, found {found}")]
    DimensionMismatch {
        subject: String,
        expected: usize,
        found: usize,
    },

    #[error("{subject}, row {row}: label {label} outside [0, {num_classes})")]
    LabelOutOfRange {
        subject: String,
        row: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("{subject}, row {row}: {reason}")]
    Probability {
        subject: String,
        row: usize,
        reason: String,
    },

    #[error("invalid pool: {0}")]
    InvalidPool(String),

    #[error("no negative samples under the {scheme} scheme")]
    EmptyNegatives { scheme: String },

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("invalid team: {0}")]
    InvalidTeam(String),

    #[error("pool size {pool_size} exceeds the enumeration limit of {limit}")]
    EnumerationLimit { pool_size: usize, limit: usize },

    #[error("model {model} has no probability matrix; {method} voting needs one")]
    MissingProbabilities { model: usize, method: &'static str },

    #[error("no FQ rule for focal model {focal} at team size {size}")]
    MissingRule { focal: usize, size: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
