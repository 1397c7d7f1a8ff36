use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::index::{Embedder, EmbedderSpec, EmbeddingVector, HashEmbedder, SearchHit, VectorStore};
use crate::ingest::{
    chunk_document, chunk_qa_pair, ChunkingMode, ChunkingPolicy, Document, QAPair, SceneSummary, SourceKind,
};

use super::{RagConfig, RagError};

const PYTHON_FILE: &str = "python.vstr";
const MARKDOWN_FILE: &str = "markdown.vstr";
const DISCOURSE_FILE: &str = "discourse.vstr";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreCounts {
    pub python: usize,
    pub markdown: usize,
    pub discourse: usize,
}

impl StoreCounts {
    pub fn total(&self) -> usize {
        self.python + self.markdown + self.discourse
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub embedder: String,
    pub dim: usize,
    pub policy: ChunkingPolicy,
    pub counts: StoreCounts,
    pub built_at_unix: u64,
}

#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub counts: StoreCounts,
    /// Documents whose kind has no persistent store.
    pub ignored_documents: usize,
}

/// The three persistent stores plus the embedder they were built with.
pub struct KnowledgeBase {
    embedder: Arc<dyn Embedder>,
    policy: ChunkingPolicy,
    python: VectorStore,
    markdown: VectorStore,
    discourse: VectorStore,
}

impl std::fmt::Debug for KnowledgeBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeBase")
            .field("embedder", self.embedder.spec())
            .field("counts", &self.counts())
            .finish()
    }
}

/// Hits for one source, in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceHits {
    pub kind: SourceKind,
    pub hits: Vec<SearchHit>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalBundle {
    pub sources: Vec<SourceHits>,
}

impl RetrievalBundle {
    pub fn hits(&self, kind: SourceKind) -> &[SearchHit] {
        self.sources
            .iter()
            .find(|s| s.kind == kind)
            .map(|s| s.hits.as_slice())
            .unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.sources.iter().all(|s| s.hits.is_empty())
    }

    pub fn len(&self) -> usize {
        self.sources.iter().map(|s| s.hits.len()).sum()
    }
}

fn embed_chunks(
    store: &mut VectorStore,
    embedder: &dyn Embedder,
    chunks: impl IntoIterator<Item = crate::ingest::Chunk>,
) -> Result<usize, RagError> {
    let mut n = 0;
    for chunk in chunks {
        let v = embedder.embed(&chunk.text);
        store.add(chunk, &v)?;
        n += 1;
    }
    Ok(n)
}

impl KnowledgeBase {
    pub fn empty(embedder: Arc<dyn Embedder>, policy: ChunkingPolicy) -> Self {
        let spec = embedder.spec().clone();
        KnowledgeBase {
            policy,
            python: VectorStore::new(spec.clone()),
            markdown: VectorStore::new(spec.clone()),
            discourse: VectorStore::new(spec),
            embedder,
        }
    }

    /// Chunks and embeds code and docs into their own stores; each Q&A
    /// pair becomes exactly one record.
    pub fn build(
        docs: &[Document],
        qa: &[QAPair],
        policy: ChunkingPolicy,
        embedder: Arc<dyn Embedder>,
    ) -> Result<(Self, BuildReport), RagError> {
        policy.validate()?;
        let mut kb = KnowledgeBase::empty(embedder, policy);
        let mut report = BuildReport::default();
        for doc in docs {
            let store = match doc.kind {
                SourceKind::PythonCode => &mut kb.python,
                SourceKind::MarkdownDoc => &mut kb.markdown,
                other => {
                    tracing::warn!("document {} has kind {other}, which has no persistent store", doc.id);
                    report.ignored_documents += 1;
                    continue;
                }
            };
            embed_chunks(store, kb.embedder.as_ref(), chunk_document(doc, &policy))?;
        }
        let qa_chunks = qa.iter().enumerate().map(|(i, pair)| {
            let mut c = chunk_qa_pair(pair);
            if c.doc_id.is_empty() {
                c.doc_id = format!("qa-{i}");
            }
            c
        });
        embed_chunks(&mut kb.discourse, kb.embedder.as_ref(), qa_chunks)?;

        report.counts = kb.counts();
        if report.counts.total() == 0 {
            tracing::warn!("knowledge base has no records");
        }
        Ok((kb, report))
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn spec(&self) -> &EmbedderSpec {
        self.embedder.spec()
    }

    pub fn policy(&self) -> &ChunkingPolicy {
        &self.policy
    }

    pub fn counts(&self) -> StoreCounts {
        StoreCounts {
            python: self.python.len(),
            markdown: self.markdown.len(),
            discourse: self.discourse.len(),
        }
    }

    /// The persistent store for `kind`, if it has one.
    pub fn store(&self, kind: SourceKind) -> Option<&VectorStore> {
        match kind {
            SourceKind::PythonCode => Some(&self.python),
            SourceKind::MarkdownDoc => Some(&self.markdown),
            SourceKind::DiscourseQA => Some(&self.discourse),
            SourceKind::SceneState | SourceKind::ConversationTurn => None,
        }
    }

    pub fn store_mut(&mut self, kind: SourceKind) -> Option<&mut VectorStore> {
        match kind {
            SourceKind::PythonCode => Some(&mut self.python),
            SourceKind::MarkdownDoc => Some(&mut self.markdown),
            SourceKind::DiscourseQA => Some(&mut self.discourse),
            SourceKind::SceneState | SourceKind::ConversationTurn => None,
        }
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        self.embedder.embed(text)
    }

    /// Embeds `query` once and takes the top hits from every enabled,
    /// non-empty source. Scene and conversation stores are request- and
    /// session-scoped, so the caller passes them in.
    pub fn retrieve(
        &self,
        query: &str,
        config: &RagConfig,
        scene: Option<&VectorStore>,
        conversation: Option<&VectorStore>,
    ) -> Result<RetrievalBundle, RagError> {
        if query.trim().is_empty() {
            return Err(RagError::EmptyQuery);
        }
        config.validate()?;
        let q = self.embed(query);
        let mut bundle = RetrievalBundle::default();
        for kind in SourceKind::ALL {
            if !config.is_enabled(kind) {
                continue;
            }
            let store = match kind {
                SourceKind::SceneState => scene,
                SourceKind::ConversationTurn => conversation,
                _ => self.store(kind),
            };
            let Some(store) = store.filter(|s| !s.is_empty()) else {
                continue;
            };
            bundle.sources.push(SourceHits {
                kind,
                hits: store.search(&q, config.k(kind))?,
            });
        }
        Ok(bundle)
    }

    pub fn manifest(&self) -> IndexManifest {
        IndexManifest {
            embedder: self.spec().name.clone(),
            dim: self.spec().dim,
            policy: self.policy,
            counts: self.counts(),
            built_at_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// Writes the stores and manifest into `dir`, which must exist.
    pub fn save(&self, dir: &Path) -> Result<(), RagError> {
        self.python.save(&dir.join(PYTHON_FILE))?;
        self.markdown.save(&dir.join(MARKDOWN_FILE))?;
        self.discourse.save(&dir.join(DISCOURSE_FILE))?;
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        fs::write(&path, json).map_err(|source| RagError::Io { path, source })
    }

    /// Saves into a sibling temp directory and renames it over `dir`, so a
    /// reader never sees a half-written index.
    pub fn save_atomic(&self, dir: &Path) -> Result<(), RagError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| RagError::Io { path, source }
        };
        let parent = match dir.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(io(&parent))?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "index".into());
        let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(io(&tmp))?;
        }
        fs::create_dir(&tmp).map_err(io(&tmp))?;
        if let Err(e) = self.save(&tmp) {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        if dir.exists() {
            let old = parent.join(format!(".{name}.old-{}", std::process::id()));
            fs::rename(dir, &old).map_err(io(dir))?;
            fs::rename(&tmp, dir).map_err(io(dir))?;
            let _ = fs::remove_dir_all(&old);
        } else {
            fs::rename(&tmp, dir).map_err(io(dir))?;
        }
        Ok(())
    }

    pub fn read_manifest(dir: &Path) -> Result<IndexManifest, RagError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| RagError::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| RagError::Manifest {
            path,
            message: e.to_string(),
        })
    }

    /// Loads an index built with the reference embedder.
    pub fn load(dir: &Path) -> Result<Self, RagError> {
        let manifest = Self::read_manifest(dir)?;
        let embedder = HashEmbedder::from_spec(&EmbedderSpec {
            name: manifest.embedder.clone(),
            dim: manifest.dim,
        })?;
        Self::load_with(dir, Arc::new(embedder))
    }

    /// Loads an index, rejecting stores built with a different embedder.
    pub fn load_with(dir: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, RagError> {
        let manifest = Self::read_manifest(dir)?;
        let spec = embedder.spec().clone();
        if manifest.embedder != spec.name || manifest.dim != spec.dim {
            return Err(RagError::Manifest {
                path: dir.join(MANIFEST_FILE),
                message: format!(
                    "index built with {}/{} but embedder is {}/{}",
                    manifest.embedder, manifest.dim, spec.name, spec.dim
                ),
            });
        }
        let kb = KnowledgeBase {
            policy: manifest.policy,
            python: VectorStore::load_expecting(&dir.join(PYTHON_FILE), &spec)?,
            markdown: VectorStore::load_expecting(&dir.join(MARKDOWN_FILE), &spec)?,
            discourse: VectorStore::load_expecting(&dir.join(DISCOURSE_FILE), &spec)?,
            embedder,
        };
        Ok(kb)
    }
}

/// Embeds the canonical JSON of a scene into a fresh, request-local store.
pub fn build_scene_store(
    summary: &SceneSummary,
    embedder: &dyn Embedder,
    policy: &ChunkingPolicy,
) -> Result<VectorStore, RagError> {
    let mut store = VectorStore::new(embedder.spec().clone());
    if summary.is_empty() {
        return Ok(store);
    }
    let policy = ChunkingPolicy {
        mode: ChunkingMode::TokenOnly,
        ..*policy
    };
    policy.validate()?;
    let doc = Document::new("scene", SourceKind::SceneState, "scene", summary.to_canonical_json());
    embed_chunks(&mut store, embedder, chunk_document(&doc, &policy))?;
    Ok(store)
}

/// Session-scoped conversation history, written back after each reply.
#[derive(Debug, Clone)]
pub struct ConversationMemory {
    session_id: String,
    store: VectorStore,
    turns: u32,
}

impl ConversationMemory {
    pub fn new(session_id: impl Into<String>, spec: EmbedderSpec) -> Self {
        ConversationMemory {
            session_id: session_id.into(),
            store: VectorStore::new(spec),
            turns: 0,
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }

    pub fn turns(&self) -> u32 {
        self.turns
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn reset(&mut self) {
        self.store.clear();
        self.turns = 0;
    }

    /// Chunks one exchange into the store. Does nothing unless history is
    /// enabled; returns the number of records added.
    pub fn append(
        &mut self,
        embedder: &dyn Embedder,
        user_text: &str,
        assistant_text: &str,
        policy: &ChunkingPolicy,
        config: &RagConfig,
    ) -> Result<usize, RagError> {
        if !config.history_enabled {
            return Ok(0);
        }
        policy.validate()?;
        let id = format!("{}#{}", self.session_id, self.turns);
        let doc = Document::new(
            id,
            SourceKind::ConversationTurn,
            self.session_id.clone(),
            format!("USER: {user_text}\nASSISTANT: {assistant_text}"),
        );
        let added = embed_chunks(&mut self.store, embedder, chunk_document(&doc, policy))?;
        self.turns += 1;
        Ok(added)
    }
}
