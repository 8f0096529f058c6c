use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("`{stage}` needs {path}, which does not exist; run `{producer}` first or point the config at it")]
    StageDependency {
        stage: &'static str,
        path: PathBuf,
        producer: &'static str,
    },

    #[error(transparent)]
    Data(tripinfer::Error),

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<tripinfer::Error> for CliError {
    fn from(e: tripinfer::Error) -> Self {
        match e {
            tripinfer::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Data(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) | CliError::Output { .. } => 2,
            CliError::StageDependency { .. } => 3,
        }
    }
}
