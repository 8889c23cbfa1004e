use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed concept: {0}")]
    MalformedConcept(String),

    #[error("unknown concept {cui}")]
    UnknownConcept { cui: String },

    #[error("semantic group {0} has no members")]
    EmptyGroup(String),

    #[error("graph is frozen and cannot be modified")]
    Frozen,

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("no concepts survived ingest")]
    EmptyGraph,

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("concept {cui} has no term in language {language}")]
    MissingTerm { cui: String, language: String },

    #[error("invalid rendering input: {0}")]
    Render(String),

    #[error("invalid special tokens: {0}")]
    SpecialTokens(String),

    #[error("invalid weighting input: {0}")]
    Weights(String),

    #[error("invalid loss input: {0}")]
    Loss(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("graph cache: {0}")]
    Cache(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
}
