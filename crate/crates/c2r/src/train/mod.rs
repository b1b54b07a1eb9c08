pub mod kmeans;
pub mod losses;
pub mod trainer;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Diff(#[from] crate::diffcore::DiffError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Nan { epoch: usize, batch: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Inferred training environments: cluster centroids over counterfactual
/// representations plus the cluster id assigned to each training graph.
pub struct EnvironmentSet {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
}
