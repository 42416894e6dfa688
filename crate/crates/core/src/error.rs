use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Validation(String),

    #[error("undefined cosine for zero vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty cluster")]
    EmptyCluster,

    #[error("non-finite value {0}")]
    NonFinite(String),

    #[error("semantic centroids required")]
    MissingSemanticCentroids,

    #[error("embedding file: {0}")]
    EmbeddingFormat(String),

    #[error("llm transport: {0}")]
    Transport(String),

    #[error("unparseable llm response: {0}")]
    ResponseParse(String),

    #[error("encoder: {0}")]
    Encoder(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
