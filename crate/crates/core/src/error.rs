use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("record {id}: {}", violations.join("; "))]
    InvalidRecord { id: String, violations: Vec<String> },

    #[error("head-count mismatch: expected {expected} heads, found {found} (record {id})")]
    HeadCountMismatch { expected: usize, found: usize, id: String },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("record {id}: missing rating from judge {judge:?}")]
    MissingJudge { id: String, judge: String },

    #[error("record {0}: accuracy label unset")]
    UnresolvedLabel(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("attention source absent: {0}")]
    AttentionAbsent(String),

    #[error("head index {index} out of range for {n_heads} heads")]
    HeadOutOfRange { index: usize, n_heads: usize },

    #[error("AUROC undefined: {0}")]
    AurocUndefined(String),

    #[error("ranks degenerate: {0}")]
    RanksDegenerate(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than bad settings.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InvalidRecord { .. }
                | Error::HeadCountMismatch { .. }
                | Error::DuplicateId(_)
                | Error::MissingJudge { .. }
                | Error::UnresolvedLabel(_)
                | Error::LengthMismatch(_)
                | Error::AttentionAbsent(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
