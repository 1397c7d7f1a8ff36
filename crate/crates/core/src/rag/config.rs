use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ingest::SourceKind;

use super::RagError;

/// Which knowledge sources feed the prompt, and how much of each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagConfig {
    pub enabled: BTreeSet<SourceKind>,
    #[serde(default)]
    pub k_per_source: BTreeMap<SourceKind, usize>,
    #[serde(default = "default_budget")]
    pub prompt_token_budget: usize,
    #[serde(default)]
    pub history_enabled: bool,
}

fn default_budget() -> usize {
    3072
}

impl Default for RagConfig {
    /// Every persistent source plus the scene; conversation history off.
    fn default() -> Self {
        RagConfig::with_sources([
            SourceKind::PythonCode,
            SourceKind::MarkdownDoc,
            SourceKind::DiscourseQA,
            SourceKind::SceneState,
        ])
    }
}

impl RagConfig {
    pub fn with_sources(sources: impl IntoIterator<Item = SourceKind>) -> Self {
        let enabled: BTreeSet<_> = sources.into_iter().collect();
        RagConfig {
            history_enabled: enabled.contains(&SourceKind::ConversationTurn),
            enabled,
            k_per_source: BTreeMap::new(),
            prompt_token_budget: default_budget(),
        }
    }

    pub fn none() -> Self {
        RagConfig::with_sources([])
    }

    pub fn default_k(kind: SourceKind) -> usize {
        match kind {
            SourceKind::PythonCode | SourceKind::MarkdownDoc | SourceKind::ConversationTurn => 2,
            SourceKind::DiscourseQA | SourceKind::SceneState => 1,
        }
    }

    pub fn k(&self, kind: SourceKind) -> usize {
        self.k_per_source
            .get(&kind)
            .copied()
            .unwrap_or_else(|| Self::default_k(kind))
    }

    pub fn is_enabled(&self, kind: SourceKind) -> bool {
        self.enabled.contains(&kind)
    }

    pub fn validate(&self) -> Result<(), RagError> {
        if self.prompt_token_budget == 0 {
            return Err(RagError::Config("prompt_token_budget must be positive".into()));
        }
        for &kind in &self.enabled {
            if self.k(kind) == 0 {
                return Err(RagError::Config(format!("k for {kind} must be at least 1")));
            }
        }
        Ok(())
    }
}
