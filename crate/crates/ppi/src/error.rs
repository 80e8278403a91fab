use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("g returned a non-finite value at sample index {index}")]
    NonFinite { index: usize },

    #[error("input values are not sorted ascending")]
    Unsorted,

    #[error("partition underfilled: partition {0} has fewer than 3 members")]
    PartitionUnderfilled(usize),

    #[error("data error at row {row}: {msg}")]
    Data { row: usize, msg: String },

    #[error("data error: {0}")]
    DataOther(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input (files, flags, domains) rather
    /// than by a failure while computing. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::EmptySample
                | Error::InvalidArgument(_)
                | Error::Data { .. }
                | Error::DataOther(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
