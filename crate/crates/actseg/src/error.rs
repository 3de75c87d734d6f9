//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file content; `detail` names the byte offset or row.
    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// Numerically degenerate input, e.g. a zero vector handed to a normalizer.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A metric was asked to average over zero evaluated frames or classes.
    #[error("empty evaluation: {0}")]
    EmptyEvaluation(String),

    /// Constant input for which a correlation is not defined.
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    /// Collinear regression design in a partial-correlation control set.
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    /// Every video-observable rubric item is missing from a record.
    #[error("no observable items present for session {0}")]
    NoObservableItems(String),

    /// A segment label has no macro-category assignment.
    #[error("unmapped action label {0}")]
    UnmappedLabel(u8),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
