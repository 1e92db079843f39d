use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("no eligible documents")]
    NoEligibleDocuments,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("vocab mismatch: expected fingerprint {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("sequence of length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed input {path}: {reason}")]
    Input { path: PathBuf, reason: String },

    #[error("missing artifact {0}; run the earlier pipeline stage first")]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyCorpus => "empty_corpus",
            Error::NoEligibleDocuments => "no_eligible_documents",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::VocabMismatch { .. } => "vocab_mismatch",
            Error::SequenceTooLong { .. } => "sequence_too_long",
            Error::Divergence { .. } => "divergence",
            Error::Checkpoint(_) => "checkpoint",
            Error::Input { .. } => "input",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
