use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown corpus format `{0}` (expected `dir-per-category` or `labeled-lines`)")]
    UnknownFormat(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Embedding(String),

    #[error("{count} vocabulary words have no embedding: {sample}")]
    MissingEmbeddings { count: usize, sample: String },

    #[error("embedding overflow: non-finite inner product for topic {topic}")]
    EmbeddingOverflow { topic: usize },

    #[error("all topics are inactive for this document")]
    NoActiveTopics,

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("vocabulary hash mismatch: checkpoint has {expected}, vocabulary has {found}")]
    VocabularyHash { expected: String, found: String },

    #[error("classifier needs at least two classes, got {0}")]
    SingleClass(usize),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
