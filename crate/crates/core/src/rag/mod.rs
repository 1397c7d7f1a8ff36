//! Per-source knowledge base, retrieval and prompt assembly.

mod config;
mod kb;
mod prompt;

use std::path::PathBuf;

use thiserror::Error;

use crate::index::IndexError;
use crate::ingest::IngestError;

pub use config::RagConfig;
pub use kb::{
    build_scene_store, BuildReport, ConversationMemory, IndexManifest, KnowledgeBase, RetrievalBundle, SourceHits,
    StoreCounts,
};
pub use prompt::{assemble_prompt, AssembledPrompt, Provenance, PROMPT_HEADER};

#[derive(Debug, Error)]
pub enum RagError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("prompt budget of {budget} tokens cannot hold the header and question ({required} tokens)")]
    BudgetTooSmall { budget: usize, required: usize },
    #[error("invalid RAG config: {0}")]
    Config(String),
    #[error("bad index manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
