//! Embeddings and the exact flat vector store.

mod embed;
mod store;

use std::path::PathBuf;

use thiserror::Error;

pub use embed::{
    cosine_similarity, embed_text, fnv1a64, Embedder, EmbedderSpec, EmbeddingVector, HashEmbedder, DEFAULT_DIM,
    REFERENCE_EMBEDDER_NAME,
};
pub use store::{SearchHit, VectorStore, FORMAT_VERSION, MAGIC};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("embedding dimension must be at least 2, got {0}")]
    BadDim(usize),
    #[error("vector is not unit-norm (norm {0})")]
    NotUnitNorm(f64),
    #[error("embedder mismatch: expected '{expected}', got '{got}'")]
    EmbedderMismatch { expected: String, got: String },
    #[error("corrupt store at byte offset {offset}: {message}")]
    Corrupt { offset: u64, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
