//! Sentence-embedding storage, reshaping and producers.

mod matrix;
mod remote;
mod store;
pub mod synthetic;

pub use matrix::{reshape_768_to_32x24, EmbeddingMatrix, Layout, GRID_COLS, GRID_ROWS};
pub use remote::{fetch_remote, EmbedRequest, EmbedResponse, RetryPolicy};
pub use store::EmbeddingStore;

use thiserror::Error;

/// Length of every sentence embedding.
pub const EMBEDDING_DIM: usize = 768;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated payload: header declares {declared} rows, payload holds {actual}")]
    Truncated { declared: usize, actual: usize },
    #[error("manifest lists {manifest} rows but payload has {payload}")]
    CountMismatch { manifest: usize, payload: usize },
    #[error("embedding dimension {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("duplicate sentence id {0}")]
    Duplicate(String),
    #[error("non-finite value in embedding for {0}")]
    NonFinite(String),
    #[error("{} sentence id(s) have no embedding: {}", .0.len(), .0.iter().take(10).cloned().collect::<Vec<_>>().join(", "))]
    Missing(Vec<String>),
    #[error("remote embedding request failed: {0}")]
    Remote(String),
}
