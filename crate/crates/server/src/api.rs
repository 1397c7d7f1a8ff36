//! JSON shapes of the HTTP API.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use slicerchat_core::{GenerationParams, RagConfig, SourceKind};

/// Per-request knowledge-source switches. `history` turns on both retrieval
/// from and write-back to the session's conversation memory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RagToggles {
    pub python: bool,
    pub markdown: bool,
    pub discourse: bool,
    pub scene: bool,
    pub history: bool,
    /// Overrides keyed by source name (`python`, `markdown`, ...).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub k: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_token_budget: Option<usize>,
}

impl RagToggles {
    pub fn all() -> Self {
        RagToggles {
            python: true,
            markdown: true,
            discourse: true,
            scene: true,
            ..Default::default()
        }
    }

    pub fn to_config(&self, base: &RagConfig) -> Result<RagConfig, String> {
        let switches = [
            (SourceKind::PythonCode, self.python),
            (SourceKind::MarkdownDoc, self.markdown),
            (SourceKind::DiscourseQA, self.discourse),
            (SourceKind::SceneState, self.scene),
            (SourceKind::ConversationTurn, self.history),
        ];
        let mut config = RagConfig::with_sources(switches.iter().filter(|(_, on)| *on).map(|(k, _)| *k));
        config.k_per_source = base.k_per_source.clone();
        config.prompt_token_budget = self.prompt_token_budget.unwrap_or(base.prompt_token_budget);
        for (name, &k) in &self.k {
            let kind: SourceKind = name.parse()?;
            config.k_per_source.insert(kind, k);
        }
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}

impl From<&RagConfig> for RagToggles {
    fn from(c: &RagConfig) -> Self {
        RagToggles {
            python: c.is_enabled(SourceKind::PythonCode),
            markdown: c.is_enabled(SourceKind::MarkdownDoc),
            discourse: c.is_enabled(SourceKind::DiscourseQA),
            scene: c.is_enabled(SourceKind::SceneState),
            history: c.history_enabled,
            k: c.k_per_source
                .iter()
                .map(|(kind, k)| (kind.short_name().to_string(), *k))
                .collect(),
            prompt_token_budget: Some(c.prompt_token_budget),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub session_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_xml: Option<String>,
    /// Service defaults apply when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rag: Option<RagToggles>,
    /// Backend id; the service's default backend when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default)]
    pub params: GenerationParams,
}

impl ChatRequest {
    pub fn new(session_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        ChatRequest {
            session_id: session_id.into(),
            prompt: prompt.into(),
            scene_xml: None,
            rag: None,
            model: None,
            params: GenerationParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatStats {
    pub prompt_tokens: usize,
    pub output_tokens: usize,
    pub backend_seconds: f64,
    /// Request receipt to `eos` emission, measured by the service.
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChatEvent {
    Token { text: String },
    Eos { stats: ChatStats },
    Error { message: String },
}

impl ChatEvent {
    pub fn error(message: impl Into<String>) -> Self {
        ChatEvent::Error {
            message: message.into(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, ChatEvent::Token { .. })
    }

    /// One NDJSON line, newline included.
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("event serializes");
        line.push('\n');
        line
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub kind: String,
    pub ready: bool,
}
