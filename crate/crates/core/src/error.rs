//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

use thiserror::Error;

use crate::data::ClassId;

pub type Result<T, E = KssError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KssError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: String,
        found: String,
    },

    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },

    #[error("invalid attribute matrix: {0}")]
    AttributeMatrix(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no donor sample for class {class} attribute {attribute}")]
    DonorUnavailable { class: ClassId, attribute: usize },

    #[error("similar-category search has no candidate classes")]
    NoCandidates,

    #[error("cannot fit {components} mixture components to {points} points")]
    TooFewPoints { points: usize, components: usize },

    #[error("covariance matrix is not positive definite")]
    SingularCovariance,

    #[error("no unseen classes configured")]
    NoUnseenClasses,

    #[error("{what} mismatch: checkpoint has {stored}, current run has {current}")]
    HashMismatch {
        what: &'static str,
        stored: String,
        current: String,
    },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

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

impl KssError {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        KssError::Shape {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KssError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the `kss-diag` binary.
    ///
    /// 2 = configuration or I/O, 3 = checkpoint mismatch, 4 = generation
    /// infeasible, 1 = anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            KssError::Config(_)
            | KssError::Parse { .. }
            | KssError::AttributeMatrix(_)
            | KssError::Io { .. }
            | KssError::Json(_)
            | KssError::Csv(_) => 2,
            KssError::HashMismatch { .. } | KssError::Checkpoint { .. } => 3,
            KssError::DonorUnavailable { .. } => 4,
            _ => 1,
        }
    }
}
