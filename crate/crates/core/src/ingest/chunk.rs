//! Token-window and structure-aware chunking.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::tokenize::{count_tokens, token_spans};
use super::{Chunk, Document, IngestError, QAPair, SourceKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChunkingMode {
    TokenOnly,
    #[default]
    StructureAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingPolicy {
    pub max_tokens: usize,
    pub overlap: usize,
    #[serde(default)]
    pub mode: ChunkingMode,
}

impl Default for ChunkingPolicy {
    fn default() -> Self {
        ChunkingPolicy {
            max_tokens: 200,
            overlap: 50,
            mode: ChunkingMode::default(),
        }
    }
}

impl ChunkingPolicy {
    pub fn new(max_tokens: usize, overlap: usize, mode: ChunkingMode) -> Result<Self, IngestError> {
        let policy = ChunkingPolicy {
            max_tokens,
            overlap,
            mode,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn token_only(max_tokens: usize, overlap: usize) -> Result<Self, IngestError> {
        Self::new(max_tokens, overlap, ChunkingMode::TokenOnly)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.max_tokens == 0 {
            return Err(IngestError::Policy("max_tokens must be positive".into()));
        }
        if self.overlap >= self.max_tokens {
            return Err(IngestError::Policy(format!(
                "overlap ({}) must be smaller than max_tokens ({})",
                self.overlap, self.max_tokens
            )));
        }
        Ok(())
    }

    fn stride(&self) -> usize {
        self.max_tokens - self.overlap
    }
}

/// Sliding windows of `max_tokens` with step `max_tokens - overlap` over `range`.
fn windows(range: Range<usize>, policy: &ChunkingPolicy, out: &mut Vec<Range<usize>>) {
    let len = range.end - range.start;
    let stride = policy.stride();
    let mut offset = 0;
    while offset < len {
        let start = range.start + offset;
        out.push(start..(start + policy.max_tokens).min(range.end));
        offset += stride;
    }
}

fn is_boundary_line(line: &str, kind: SourceKind) -> bool {
    match kind {
        SourceKind::MarkdownDoc => line.starts_with('#'),
        SourceKind::PythonCode => line.starts_with("def ") || line.starts_with("class "),
        _ => false,
    }
}

/// Token ranges of the structural segments of `text`.
fn segments(text: &str, kind: SourceKind, spans: &[Range<usize>]) -> Vec<Range<usize>> {
    let mut boundaries = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if offset > 0 && is_boundary_line(line, kind) {
            boundaries.push(offset);
        }
        offset += line.len();
    }

    let mut out = Vec::with_capacity(boundaries.len() + 1);
    let mut seg_start = 0;
    let mut next = boundaries.iter().peekable();
    for (i, span) in spans.iter().enumerate() {
        let mut crossed = false;
        while next.peek().is_some_and(|&&b| b <= span.start) {
            next.next();
            crossed = true;
        }
        if crossed && i > seg_start {
            out.push(seg_start..i);
            seg_start = i;
        }
    }
    if seg_start < spans.len() {
        out.push(seg_start..spans.len());
    }
    out
}

fn token_ranges(doc: &Document, policy: &ChunkingPolicy, spans: &[Range<usize>]) -> Vec<Range<usize>> {
    let mut ranges = Vec::new();
    match policy.mode {
        ChunkingMode::TokenOnly => windows(0..spans.len(), policy, &mut ranges),
        ChunkingMode::StructureAware => {
            let mut pending: Option<Range<usize>> = None;
            for seg in segments(&doc.text, doc.kind, spans) {
                if seg.len() > policy.max_tokens {
                    ranges.extend(pending.take());
                    windows(seg, policy, &mut ranges);
                    continue;
                }
                pending = match pending {
                    Some(cur) if cur.len() + seg.len() <= policy.max_tokens => Some(cur.start..seg.end),
                    Some(cur) => {
                        ranges.push(cur);
                        Some(seg)
                    }
                    None => Some(seg),
                };
            }
            ranges.extend(pending);
        }
    }
    ranges
}

/// Splits `doc` into chunks of at most `policy.max_tokens` tokens.
///
/// Each chunk's text is the minimal substring of the document covering its
/// tokens, so re-tokenizing a chunk yields exactly `token_end - token_start`
/// tokens.
pub fn chunk_document(doc: &Document, policy: &ChunkingPolicy) -> Vec<Chunk> {
    let spans = token_spans(&doc.text);
    if spans.is_empty() {
        return Vec::new();
    }
    token_ranges(doc, policy, &spans)
        .into_iter()
        .enumerate()
        .map(|(seq, r)| Chunk {
            doc_id: doc.id.clone(),
            seq: seq as u32,
            text: doc.text[spans[r.start].start..spans[r.end - 1].end].to_string(),
            token_start: r.start,
            token_end: r.end,
            kind: doc.kind,
        })
        .collect()
}

/// A Q&A pair is always one chunk, however long.
pub fn chunk_qa_pair(qa: &QAPair) -> Chunk {
    let text = format!("Q: {}\nA: {}", qa.question, qa.answer);
    Chunk {
        doc_id: qa.origin.clone(),
        seq: 0,
        token_start: 0,
        token_end: count_tokens(&text),
        text,
        kind: SourceKind::DiscourseQA,
    }
}
