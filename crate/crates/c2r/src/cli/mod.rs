//! Experiment front end: config resolution with dotted overrides and the
//! gen-data / train / eval / ablate / sweep commands.

pub mod commands;
pub mod overrides;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Invalid(String),
    #[error("output {0} already exists; pass --force to overwrite")]
    WouldOverwrite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] crate::graphdata::DataError),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
    #[error(transparent)]
    Checkpoint(#[from] crate::models::checkpoint::CheckpointError),
}

pub type Result<T> = std::result::Result<T, CliError>;
