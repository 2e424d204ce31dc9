use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("non-numeric cell {value:?} at row {row}, column {column:?}")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("column {0:?} not found")]
    MissingColumn(String),

    #[error("survival time at row {row} must be positive, got {value}")]
    NonPositiveTime { row: usize, value: f64 },

    #[error("status at row {row} must be 0 or 1, got {value}")]
    InvalidStatus { row: usize, value: f64 },

    #[error("column {0:?} has zero variance")]
    ZeroVariance(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("need at least {required} observations, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cross-validation fold {fold} has {size} rows; at least 2 are required")]
    FoldTooSmall { fold: usize, size: usize },

    #[error("objective is not finite at {0}")]
    NonFinite(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("KMO index is undefined for the identity matrix")]
    DegenerateKmo,

    #[error("row {0} has zero communality and cannot be normalized")]
    ZeroCommunality(usize),

    #[error("Cox fit diverged (|beta| = {0:.3e}); the predictors may perfectly separate the outcome")]
    CoxDivergence(f64),

    #[error("Cox information matrix is singular")]
    SingularInformation,

    #[error("no events in the survival data")]
    NoEvents,

    #[error("censoring survival estimate is zero at t = {0}; IPCW weight undefined")]
    ZeroCensoringWeight(f64),

    #[error("no evaluation times in [0, {0}]")]
    EmptyGrid(f64),

    #[error("could not build folds with events after {0} attempts")]
    Refold(usize),

    #[error("{0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Pipeline stage that produced the error, if tagged.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
