use std::path::PathBuf;

use mtsg_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: ragged sample ({detail})")]
    RaggedSample { line: usize, detail: String },
    #[error("line {line}: unknown class label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: non-numeric value {value:?}")]
    NonNumericValue { line: usize, value: String },
    #[error("line {line}: missing values are not supported")]
    MissingValue { line: usize },
    #[error("unsupported dataset feature: {0}")]
    Unsupported(String),
    #[error("train/test split mismatch: {0}")]
    SplitMismatch(String),
    #[error("no sampling frequency for {0}; DE and PSD node features need one")]
    MissingSamplingFrequency(String),
    #[error("node {0} has no neighbours (all-zero adjacency row)")]
    IsolatedNode(usize),
    #[error("series of length {length} too short for {required} temporal steps")]
    SeriesTooShort { length: usize, required: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("evaluation set is empty")]
    EmptyEvaluationSet,
    #[error("AEL edge export needs a trained checkpoint")]
    CheckpointRequired,
    #[error("dataset not found: {0}")]
    DatasetNotFound(PathBuf),
    #[error("invalid binary file: {0}")]
    BadFormat(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by a run.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedHeader(_)
                | Error::RaggedSample { .. }
                | Error::UnknownLabel { .. }
                | Error::NonNumericValue { .. }
                | Error::MissingValue { .. }
                | Error::Unsupported(_)
                | Error::SplitMismatch(_)
                | Error::MissingSamplingFrequency(_)
                | Error::DatasetNotFound(_)
                | Error::BadFormat(_)
                | Error::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
