use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: u64,
        message: String,
    },

    #[error("recording too short: {samples} samples, need at least {required}")]
    TooShort { samples: usize, required: usize },

    #[error("single class: training data contains no {missing} windows")]
    SingleClass { missing: &'static str },

    #[error("sensor mismatch: {0}")]
    SensorMismatch(String),

    #[error("unsupported model format_version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(
        "filter order {order} cannot meet the response contract: passband min {passband_min_db:.2} dB, \
         stopband max {stopband_max_db:.2} dB"
    )]
    FilterDesign {
        order: usize,
        passband_min_db: f64,
        stopband_max_db: f64,
    },

    /// The message already includes the inner error, so it is not exposed
    /// as a chained source.
    #[error("{stage}: {inner}")]
    Stage { stage: &'static str, inner: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}

/// Attaches pipeline stage provenance to an error.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            inner: Box::new(e),
        })
    }
}
