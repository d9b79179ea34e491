use std::path::PathBuf;
use thiserror::Error;

use crate::backend::BackendError;
use crate::model::{KbId, RecordKind};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid triple: {0}")]
    InvalidTriple(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("prompt template must contain \"$prompt\" exactly once (found {0})")]
    Template(usize),

    #[error("sentence must not be empty")]
    EmptySentence,

    #[error("duplicate identifier {0}")]
    DuplicateId(KbId),

    #[error("{id} does not belong in a {expected} index")]
    KindMismatch { id: KbId, expected: RecordKind },

    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("index file format version {found} is newer than supported version {supported}")]
    IndexVersion { found: u16, supported: u16 },

    #[error("corrupt index file: {0}")]
    CorruptIndex(String),

    #[error("recall is undefined for an empty gold set")]
    EmptyGold,

    #[error("extraction failed for sentence {sentence:?}: {source}")]
    Backend {
        sentence: String,
        #[source]
        source: BackendError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }
}
