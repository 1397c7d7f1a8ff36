//! Core of a locally runnable retrieval-augmented chat engine.
//!
//! Knowledge flows through four stages:
//!
//! - [`ingest`] scans repositories, Q&A datasets and scene XML, and splits
//!   everything into token-bounded [`Chunk`]s.
//! - [`index`] embeds chunks into unit-norm vectors and keeps them in exact
//!   flat [`VectorStore`]s that persist to a small binary format.
//! - [`rag`] holds one store per knowledge source, retrieves the best chunks
//!   for a query and renders the budgeted prompt.
//! - [`generation`] streams tokens from a pluggable backend, either one of the
//!   deterministic mocks or an external model process speaking the framed
//!   protocol in [`generation::protocol`].

pub mod generation;
pub mod index;
pub mod ingest;
pub mod rag;

pub use generation::{BackendKind, GenerationBackend, GenerationError, GenerationParams, GenerationStats, StreamEvent};
pub use index::{cosine_similarity, EmbedderSpec, EmbeddingVector, HashEmbedder, IndexError, SearchHit, VectorStore};
pub use ingest::{
    tokenize, Chunk, ChunkingMode, ChunkingPolicy, Document, IngestError, QAPair, SceneNode, SceneSummary, SourceKind,
};
pub use rag::{AssembledPrompt, KnowledgeBase, RagConfig, RagError, RetrievalBundle};
