use thiserror::Error;

use crate::order::{Attribute, SortOrder};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderError {
    #[error("attribute `{0}` appears twice in a sort order")]
    DuplicateAttribute(Attribute),
    #[error("{prefix} is not a prefix of {order}")]
    NotAPrefix { prefix: SortOrder, order: SortOrder },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Order(#[from] OrderError),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown attribute `{attr}` ({context})")]
    UnknownAttribute { attr: Attribute, context: String },
    #[error("no statistic available for `{0}`")]
    UnknownStatistic(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{what} exceeds guard: {size} > {limit}")]
    TooLarge { what: String, size: u64, limit: u64 },
    #[error("unsatisfiable goal: {0}")]
    Unsatisfiable(String),
    #[error("input is not ordered on the known prefix (tuple #{position})")]
    UnsortedPrefix { position: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Guard violations are distinguished so the CLI can map them to their
    /// own exit status.
    pub fn is_guard_violation(&self) -> bool {
        matches!(self, Error::TooLarge { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
