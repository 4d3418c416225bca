use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid parameter vector for {model}: {reason}")]
    InvalidParameters { model: String, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate posterior{}: posterior sd is zero", replication.map(|l| format!(" in replication {l}")).unwrap_or_default())]
    DegeneratePosterior { replication: Option<usize> },

    #[error("z-scores have zero spread; no scale adjustment can be estimated")]
    ZeroZScoreSpread,

    #[error("model {0} has no closed-form posterior")]
    NoClosedForm(String),

    #[error("sampler {sampler} failed: {reason}")]
    SamplerFailed { sampler: String, reason: String },

    #[error("{failed} of {total} replications failed (limit is 1%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("operation needs the full draw matrix, but the replication set was run without keeping draws")]
    DrawsUnavailable,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
