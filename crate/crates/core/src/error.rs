use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Ingest {
        path: String,
        line: u64,
        message: String,
    },

    #[error("invalid library: {0}")]
    Library(String),

    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error(
        "learner {learner_id}: symbol {symbol:?} at index {index} is not in the model alphabet"
    )]
    UnknownSymbol {
        learner_id: String,
        index: usize,
        symbol: String,
    },

    #[error("learner {learner_id}: sequence has zero probability under the model; fit with smoothing > 0")]
    ZeroProbability { learner_id: String },

    #[error("model fitting failed: {0}")]
    Fit(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("learner sets differ: only in first = {only_a:?}, only in second = {only_b:?}")]
    LearnerMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a computation going wrong.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Ingest { .. }
            | Error::Library(_)
            | Error::Validation { .. }
            | Error::UnknownSymbol { .. }
            | Error::LearnerMismatch { .. }
            | Error::Json(_)
            | Error::Csv(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
