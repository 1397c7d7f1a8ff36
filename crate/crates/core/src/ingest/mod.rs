//! Turning raw knowledge into chunks.

mod chunk;
mod scene;
mod tokenize;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

pub use chunk::{chunk_document, chunk_qa_pair, ChunkingMode, ChunkingPolicy};
pub use scene::{extract_scene_summary, SceneNode, SceneSummary};
pub use tokenize::{count_tokens, token_spans, tokenize};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("repository root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("{path}:{line}: {message}")]
    BadLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid scene XML: {0}")]
    Scene(String),
    #[error("invalid chunking policy: {0}")]
    Policy(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// The five knowledge sources a prompt can draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceKind {
    PythonCode,
    MarkdownDoc,
    DiscourseQA,
    SceneState,
    ConversationTurn,
}

impl SourceKind {
    pub const ALL: [SourceKind; 5] = [
        SourceKind::PythonCode,
        SourceKind::MarkdownDoc,
        SourceKind::DiscourseQA,
        SourceKind::SceneState,
        SourceKind::ConversationTurn,
    ];

    /// Short lowercase name used in config files and on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            SourceKind::PythonCode => "python",
            SourceKind::MarkdownDoc => "markdown",
            SourceKind::DiscourseQA => "discourse",
            SourceKind::SceneState => "scene",
            SourceKind::ConversationTurn => "history",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.to_ascii_lowercase().as_str() {
            "python" | "py" | "pythoncode" => SourceKind::PythonCode,
            "markdown" | "md" | "markdowndoc" => SourceKind::MarkdownDoc,
            "discourse" | "qa" | "discourseqa" => SourceKind::DiscourseQA,
            "scene" | "scenestate" => SourceKind::SceneState,
            "history" | "conversation" | "conversationturn" => SourceKind::ConversationTurn,
            _ => return Err(format!("unknown source kind '{s}'")),
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub kind: SourceKind,
    /// Relative file path, URL or session id.
    pub origin: String,
    pub text: String,
    pub line_count: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, kind: SourceKind, origin: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Document {
            id: id.into(),
            kind,
            origin: origin.into(),
            line_count: text.lines().count(),
            text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub origin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
}

/// A token-bounded slice of a document, the unit of embedding and retrieval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub seq: u32,
    pub text: String,
    pub token_start: usize,
    pub token_end: usize,
    pub kind: SourceKind,
}

impl Chunk {
    pub fn token_len(&self) -> usize {
        self.token_end - self.token_start
    }
}

/// Result of walking a repository tree.
#[derive(Debug, Default, Clone)]
pub struct ScanReport {
    pub documents: Vec<Document>,
    /// Files with a matching suffix that were not valid UTF-8.
    pub skipped_non_utf8: usize,
    /// Files or directories that could not be read.
    pub unreadable: usize,
}

impl ScanReport {
    pub fn total_lines(&self) -> usize {
        self.documents.iter().map(|d| d.line_count).sum()
    }
}

fn kind_for_suffix(name_lower: &str) -> SourceKind {
    if name_lower.ends_with(".py") {
        SourceKind::PythonCode
    } else {
        SourceKind::MarkdownDoc
    }
}

/// Collects every regular file under `root` whose name ends in one of
/// `extensions` (case-insensitive), ordered by relative path.
pub fn scan_repository(root: &Path, extensions: &[String]) -> Result<ScanReport, IngestError> {
    if !root.is_dir() {
        return Err(IngestError::MissingRoot(root.to_path_buf()));
    }
    let suffixes: Vec<String> = extensions.iter().map(|e| e.to_lowercase()).collect();
    let mut report = ScanReport::default();

    for entry in WalkDir::new(root) {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                tracing::warn!("skipping unreadable entry: {err}");
                report.unreadable += 1;
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let name_lower = entry.file_name().to_string_lossy().to_lowercase();
        if !suffixes.iter().any(|s| name_lower.ends_with(s.as_str())) {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let origin = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let bytes = match fs::read(entry.path()) {
            Ok(b) => b,
            Err(err) => {
                tracing::warn!("skipping unreadable file {origin}: {err}");
                report.unreadable += 1;
                continue;
            }
        };
        let Ok(text) = String::from_utf8(bytes) else {
            tracing::warn!("skipping non-UTF-8 file {origin}");
            report.skipped_non_utf8 += 1;
            continue;
        };
        report.documents.push(Document::new(
            origin.clone(),
            kind_for_suffix(&name_lower),
            origin,
            text,
        ));
    }

    report.documents.sort_by(|a, b| a.origin.cmp(&b.origin));
    Ok(report)
}

fn read_jsonl<T, F>(path: &Path, mut validate: F) -> Result<Vec<T>, IngestError>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(&T) -> Result<(), String>,
{
    let file = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| IngestError::BadLine {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let item: T = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        validate(&item).map_err(bad)?;
        out.push(item);
    }
    Ok(out)
}

/// Reads a JSON-lines Q&A dataset, preserving file order.
pub fn load_qa_dataset(path: &Path) -> Result<Vec<QAPair>, IngestError> {
    read_jsonl(path, |qa: &QAPair| {
        if qa.question.trim().is_empty() {
            return Err("empty question".into());
        }
        if qa.answer.trim().is_empty() {
            return Err("empty answer".into());
        }
        Ok(())
    })
}

pub fn read_corpus(path: &Path) -> Result<Vec<Document>, IngestError> {
    read_jsonl(path, |doc: &Document| {
        if doc.line_count != doc.text.lines().count() {
            return Err(format!("line_count mismatch for document {}", doc.id));
        }
        Ok(())
    })
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<(), IngestError> {
    let file = fs::File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for doc in docs {
        let line = serde_json::to_string(doc).expect("document serializes");
        writeln!(w, "{line}").map_err(|e| IngestError::io(path, e))?;
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}
