use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid snapshot window [{t_initial}, {t_end}]")]
    InvalidWindow { t_initial: i64, t_end: i64 },

    #[error("incompatible snapshots: {0}")]
    IncompatibleSnapshots(String),

    #[error("node {0} does not exist")]
    UnknownNode(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("altered path count exceeds max_paths = {limit}")]
    CapacityExceeded { limit: usize },

    #[error("KL divergence is infinite: q[{index}] = 0 while p[{index}] > 0")]
    InfiniteKl { index: usize },

    #[error("invalid selection budget n = {n} for m = {m} paths")]
    Budget { n: usize, m: usize },

    #[error("invalid weights file: {0}")]
    Weights(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
