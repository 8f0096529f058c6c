use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("distribution is all-zero or contains non-finite entries")]
    DegenerateDistribution,

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {malformed} of {total} rows malformed (limit 10%)")]
    CorruptInput {
        path: PathBuf,
        malformed: usize,
        total: usize,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid staypoint: {0}")]
    InvalidStaypoint(String),

    #[error("no candidate location carries positive home evidence")]
    NoHomeEvidence,

    #[error("objective vector of individual {0} contains NaN")]
    InvalidObjective(usize),

    #[error("staypoint {0} has no inferred label")]
    IncompleteInference(usize),

    #[error("original corpus is empty")]
    EmptyCorpus,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
