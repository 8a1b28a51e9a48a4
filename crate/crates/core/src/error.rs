use thiserror::Error;

use crate::geo::SegmentId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no valid trajectories in {0}")]
    EmptyDataset(String),

    #[error("nothing to delete: location {0} does not occur in trajectory {1}")]
    NothingToDelete(String, u32),

    #[error("invalid edit on trajectory {trajectory}: {reason}")]
    InvalidEdit { trajectory: u32, reason: String },

    #[error("index integrity error: segment {0:?} is not indexed")]
    NotIndexed(SegmentId),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
