//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by ingestion, fusion, colorization, training and metrics.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// I/O failure, annotated with the path that caused it.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A required input file does not exist.
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    /// A text row that could not be parsed, reported as file:line.
    #[error("{path}:{line}: {detail}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    /// Channel lengths, durations or label intervals are inconsistent.
    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    /// A configuration value is out of its allowed range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A subject id was requested that is not present.
    #[error("unknown subject id: {0}")]
    UnknownSubject(String),

    /// A subject split left the training side empty.
    #[error("empty train split: every subject was assigned to the test set")]
    EmptyTrainSplit,

    /// The segmentation window does not fit inside the recording.
    #[error("window of {window_s} s exceeds recording duration of {duration_s} s")]
    WindowTooLong { window_s: u32, duration_s: u32 },

    /// A NaN or infinity showed up where finite samples are required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Band layout invalid: overflow, misalignment or a zero repetition.
    #[error("invalid band layout: {0}")]
    InvalidLayout(String),

    /// Matrix cells must lie in [0, 1] before colorization.
    #[error("matrix not normalized: {0}")]
    NotNormalized(String),

    /// Arrangement selector invalid or contains duplicate signals.
    #[error("invalid arrangement: {0}")]
    InvalidArrangement(String),

    /// An image does not have the expected dimensions.
    #[error("invalid image: {0}")]
    InvalidImage(String),

    /// Model architecture or input shape is inconsistent.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Model file is corrupt, truncated or has the wrong magic/version.
    #[error("model format error: {0}")]
    ModelFormat(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// Training data is empty, single-class or otherwise unusable.
    #[error("invalid training data: {0}")]
    InvalidTraining(String),

    /// Evaluation inputs are empty, mismatched or single-class.
    #[error("invalid metrics input: {0}")]
    InvalidMetrics(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn row(path: impl Into<PathBuf>, line: usize, detail: impl Into<String>) -> Self {
        Error::MalformedRow {
            path: path.into(),
            line,
            detail: detail.into(),
        }
    }
}
