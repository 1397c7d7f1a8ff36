//! Rendering the retrieval-augmented prompt under a token budget.

use serde::{Deserialize, Serialize};

use crate::ingest::{count_tokens, token_spans, SourceKind};

use super::{RagConfig, RagError, RetrievalBundle};

pub const PROMPT_HEADER: &str = "[INST] You are SlicerChat, an assistant for the 3D Slicer platform. \
Answer using the context below; if the context is insufficient, say so instead of inventing APIs.\n\n";

/// Section order in the rendered prompt.
const SECTIONS: [(SourceKind, &str); 5] = [
    (SourceKind::PythonCode, "Python examples"),
    (SourceKind::MarkdownDoc, "Documentation"),
    (SourceKind::DiscourseQA, "Example exchange"),
    (SourceKind::SceneState, "Current scene"),
    (SourceKind::ConversationTurn, "Earlier conversation"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: SourceKind,
    pub origin: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub text: String,
    pub token_count: usize,
    /// Chunks present in the prompt, in render order.
    pub provenance: Vec<Provenance>,
    /// Chunks left out, in the order they were dropped.
    pub dropped: Vec<Provenance>,
    /// The exemplar's answer was cut short to fit the budget.
    pub exemplar_truncated: bool,
}

#[derive(Debug, Clone)]
struct Item {
    kind: SourceKind,
    origin: String,
    score: f64,
    text: String,
}

impl Item {
    fn provenance(&self) -> Provenance {
        Provenance {
            kind: self.kind,
            origin: self.origin.clone(),
            score: self.score,
        }
    }
}

fn question_tail(user_query: &str) -> String {
    format!("### Question\n{user_query}\n[/INST]\n")
}

fn render(items: &[Item], user_query: &str) -> String {
    let mut out = String::from(PROMPT_HEADER);
    for (kind, title) in SECTIONS {
        let mut section = items.iter().filter(|i| i.kind == kind).peekable();
        if section.peek().is_none() {
            continue;
        }
        let body: Vec<String> = if kind == SourceKind::DiscourseQA {
            section.map(|i| i.text.clone()).collect()
        } else {
            section.map(|i| format!("--- {}\n{}", i.origin, i.text)).collect()
        };
        out.push_str("### ");
        out.push_str(title);
        out.push('\n');
        out.push_str(&body.join("\n"));
        out.push_str("\n\n");
    }
    out.push_str(&question_tail(user_query));
    out
}

/// Index of the retained item to evict next: lowest score, ties going to
/// the item rendered later. The exemplar is never picked here.
fn eviction_candidate(items: &[Item]) -> Option<usize> {
    items
        .iter()
        .enumerate()
        .filter(|(_, i)| i.kind != SourceKind::DiscourseQA)
        .min_by(|(ia, a), (ib, b)| a.score.total_cmp(&b.score).then(ib.cmp(ia)))
        .map(|(idx, _)| idx)
}

/// Shortens the exemplar's answer to the longest token prefix (at least one
/// token) that fits. Returns false if even one token does not fit.
fn truncate_exemplar(items: &mut [Item], ex: usize, user_query: &str, budget: usize) -> bool {
    let text = items[ex].text.clone();
    let answer_at = text.find("\nA: ").map(|p| p + 4).unwrap_or(0);
    let (prefix, answer) = text.split_at(answer_at);
    let spans = token_spans(answer);

    let with_tokens = |items: &mut [Item], m: usize| {
        items[ex].text = format!("{prefix}{}", &answer[..spans[m - 1].end]);
        count_tokens(&render(items, user_query)) <= budget
    };
    if spans.is_empty() || !with_tokens(items, 1) {
        items[ex].text = text;
        return false;
    }
    // Largest m in [1, len] that fits; prompt length is monotone in m.
    let (mut lo, mut hi) = (1, spans.len());
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if with_tokens(items, mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    with_tokens(items, lo);
    true
}

/// Renders the prompt template, evicting the lowest-scoring chunks until the
/// token budget holds. The Q&A exemplar goes last: first its answer is
/// shortened, then it is dropped.
pub fn assemble_prompt(
    user_query: &str,
    bundle: &RetrievalBundle,
    config: &RagConfig,
) -> Result<AssembledPrompt, RagError> {
    let budget = config.prompt_token_budget;
    let required = count_tokens(PROMPT_HEADER) + count_tokens(&question_tail(user_query));
    if required > budget {
        return Err(RagError::BudgetTooSmall { budget, required });
    }

    let mut items = Vec::new();
    let mut dropped = Vec::new();
    for (kind, _) in SECTIONS {
        if !config.is_enabled(kind) {
            continue;
        }
        let hits = bundle.hits(kind);
        let keep = if kind == SourceKind::DiscourseQA { 1 } else { hits.len() };
        for (rank, hit) in hits.iter().enumerate() {
            let item = Item {
                kind,
                origin: hit.chunk.doc_id.clone(),
                score: hit.score,
                text: hit.chunk.text.clone(),
            };
            if rank < keep {
                items.push(item);
            } else {
                dropped.push(item.provenance());
            }
        }
    }

    let mut exemplar_truncated = false;
    let mut text = render(&items, user_query);
    let mut token_count = count_tokens(&text);
    while token_count > budget {
        if let Some(idx) = eviction_candidate(&items) {
            dropped.push(items.remove(idx).provenance());
        } else {
            let ex = items
                .iter()
                .position(|i| i.kind == SourceKind::DiscourseQA)
                .expect("over budget with no retrieved items");
            if truncate_exemplar(&mut items, ex, user_query, budget) {
                exemplar_truncated = true;
            } else {
                dropped.push(items.remove(ex).provenance());
            }
        }
        text = render(&items, user_query);
        token_count = count_tokens(&text);
    }

    Ok(AssembledPrompt {
        provenance: items.iter().map(Item::provenance).collect(),
        text,
        token_count,
        dropped,
        exemplar_truncated,
    })
}
