use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime};

use slicerchat_core::ingest::extract_scene_summary;
use slicerchat_core::rag::{assemble_prompt, build_scene_store, ConversationMemory};
use slicerchat_core::{GenerationBackend, GenerationError, KnowledgeBase, RagConfig, SourceKind};
use thiserror::Error;
use tokio::sync::mpsc::{self, UnboundedReceiver, UnboundedSender};
use tokio_util::sync::CancellationToken;

use crate::api::{ChatEvent, ChatRequest, ChatStats, ModelInfo};
use crate::registry::{BackendConfig, BackendRegistry};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid service configuration: {0}")]
    Config(String),
}

/// Why a chat request was refused before any event was produced.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("generation in progress for session '{0}'")]
    SessionBusy(String),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub backends: Vec<BackendConfig>,
    /// Backend used when a request names none; the first backend if unset.
    pub default_model: Option<String>,
    pub default_rag: RagConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            backends: BackendConfig::defaults(),
            default_model: None,
            default_rag: RagConfig::default(),
        }
    }
}

struct Session {
    memory: tokio::sync::Mutex<ConversationMemory>,
    busy: AtomicBool,
    created: SystemTime,
    last_used: Mutex<SystemTime>,
}

/// Clears a session's busy flag when the pipeline task ends, however it ends.
struct BusyGuard(Arc<Session>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

pub struct ChatService {
    kb: Arc<KnowledgeBase>,
    backends: BackendRegistry,
    default_model: String,
    default_rag: RagConfig,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
}

impl ChatService {
    pub fn new(kb: Arc<KnowledgeBase>, config: ServiceConfig) -> Result<Self, ServiceError> {
        let backends = BackendRegistry::from_configs(&config.backends)?;
        Self::with_registry(kb, backends, config.default_model, config.default_rag)
    }

    pub fn with_registry(
        kb: Arc<KnowledgeBase>,
        backends: BackendRegistry,
        default_model: Option<String>,
        default_rag: RagConfig,
    ) -> Result<Self, ServiceError> {
        let default_model = match default_model {
            Some(id) if backends.get(&id).is_none() => {
                return Err(ServiceError::Config(format!("default model '{id}' is not registered")))
            }
            Some(id) => id,
            None => backends
                .ids()
                .next()
                .ok_or_else(|| ServiceError::Config("at least one backend is required".into()))?
                .to_string(),
        };
        default_rag
            .validate()
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(ChatService {
            kb,
            backends,
            default_model,
            default_rag,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn index_chunks(&self) -> usize {
        self.kb.counts().total()
    }

    pub async fn list_models(&self) -> Vec<ModelInfo> {
        self.backends.list().await
    }

    fn session(&self, id: &str) -> Arc<Session> {
        let mut sessions = self.sessions.lock().unwrap();
        sessions
            .entry(id.to_string())
            .or_insert_with(|| {
                let now = SystemTime::now();
                Arc::new(Session {
                    memory: tokio::sync::Mutex::new(ConversationMemory::new(id, self.kb.spec().clone())),
                    busy: AtomicBool::new(false),
                    created: now,
                    last_used: Mutex::new(now),
                })
            })
            .clone()
    }

    /// Records in the session's conversation store; 0 for unknown sessions.
    pub async fn conversation_len(&self, session_id: &str) -> usize {
        let session = self.sessions.lock().unwrap().get(session_id).cloned();
        match session {
            Some(s) => s.memory.lock().await.len(),
            None => 0,
        }
    }

    pub fn session_created(&self, session_id: &str) -> Option<SystemTime> {
        self.sessions.lock().unwrap().get(session_id).map(|s| s.created)
    }

    /// Empties a session's conversation memory. Unknown sessions are a no-op.
    pub async fn reset_session(&self, session_id: &str) -> Result<(), Rejection> {
        let session = self.sessions.lock().unwrap().get(session_id).cloned();
        let Some(session) = session else {
            return Ok(());
        };
        if session
            .busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return Err(Rejection::SessionBusy(session_id.to_string()));
        }
        let _guard = BusyGuard(session.clone());
        session.memory.lock().await.reset();
        Ok(())
    }

    /// Validates `request` and starts its pipeline. Events arrive on the
    /// returned channel; dropping the receiver cancels generation.
    pub fn handle_chat(
        self: &Arc<Self>,
        request: ChatRequest,
        received: Instant,
    ) -> Result<UnboundedReceiver<ChatEvent>, Rejection> {
        if request.session_id.trim().is_empty() {
            return Err(Rejection::BadRequest("session_id must not be empty".into()));
        }
        if request.prompt.trim().is_empty() {
            return Err(Rejection::BadRequest("prompt must not be empty".into()));
        }
        let model = request.model.clone().unwrap_or_else(|| self.default_model.clone());
        let backend = self
            .backends
            .get(&model)
            .cloned()
            .ok_or_else(|| Rejection::UnknownModel(model.clone()))?;
        let config = match &request.rag {
            Some(toggles) => toggles.to_config(&self.default_rag).map_err(Rejection::BadRequest)?,
            None => self.default_rag.clone(),
        };
        request
            .params
            .validate()
            .map_err(|e| Rejection::BadRequest(e.to_string()))?;

        let session = self.session(&request.session_id);
        if session
            .busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return Err(Rejection::SessionBusy(request.session_id));
        }
        *session.last_used.lock().unwrap() = SystemTime::now();
        let guard = BusyGuard(session);

        let (tx, rx) = mpsc::unbounded_channel();
        let service = self.clone();
        tokio::spawn(async move {
            service
                .run_pipeline(request, config, backend, guard, tx, received)
                .await;
        });
        Ok(rx)
    }

    async fn run_pipeline(
        &self,
        request: ChatRequest,
        config: RagConfig,
        backend: Arc<dyn GenerationBackend>,
        guard: BusyGuard,
        tx: UnboundedSender<ChatEvent>,
        received: Instant,
    ) {
        let session = guard.0.clone();
        let embedder = self.kb.embedder().clone();

        let scene_store = match (&request.scene_xml, config.is_enabled(SourceKind::SceneState)) {
            (Some(xml), true) => {
                let built = extract_scene_summary(xml).map_err(|e| e.to_string()).and_then(|s| {
                    build_scene_store(&s, embedder.as_ref(), self.kb.policy()).map_err(|e| e.to_string())
                });
                match built {
                    Ok(store) => Some(store),
                    Err(message) => {
                        let _ = tx.send(ChatEvent::error(message));
                        return;
                    }
                }
            }
            _ => None,
        };

        let prompt = {
            let memory = session.memory.lock().await;
            let conversation = config.is_enabled(SourceKind::ConversationTurn).then(|| memory.store());
            self.kb
                .retrieve(&request.prompt, &config, scene_store.as_ref(), conversation)
                .and_then(|bundle| assemble_prompt(&request.prompt, &bundle, &config))
        };
        let prompt = match prompt {
            Ok(p) => p,
            Err(e) => {
                let _ = tx.send(ChatEvent::error(e.to_string()));
                return;
            }
        };
        tracing::debug!(
            session = %request.session_id,
            prompt_tokens = prompt.token_count,
            sources = prompt.provenance.len(),
            dropped = prompt.dropped.len(),
            "assembled prompt"
        );

        let cancel = CancellationToken::new();
        let mut completion = String::new();
        let result = {
            let token_tx = tx.clone();
            let token_cancel = cancel.clone();
            let mut sink = |t: &str| {
                completion.push_str(t);
                if token_tx.send(ChatEvent::Token { text: t.to_string() }).is_err() {
                    token_cancel.cancel();
                }
            };
            backend.stream(&prompt.text, &request.params, &mut sink, &cancel).await
        };

        match result {
            Ok(stats) => {
                let stats = ChatStats {
                    prompt_tokens: stats.prompt_tokens,
                    output_tokens: stats.output_tokens,
                    backend_seconds: stats.backend_seconds,
                    total_seconds: received.elapsed().as_secs_f64(),
                };
                let _ = tx.send(ChatEvent::Eos { stats });
            }
            Err(GenerationError::Cancelled) if tx.is_closed() => {
                tracing::debug!(session = %request.session_id, "client went away; generation cancelled");
                return;
            }
            Err(e) => {
                let _ = tx.send(ChatEvent::error(e.to_string()));
                return;
            }
        }

        if config.history_enabled {
            let mut memory = session.memory.lock().await;
            if let Err(e) = memory.append(
                embedder.as_ref(),
                &request.prompt,
                &completion,
                self.kb.policy(),
                &config,
            ) {
                tracing::warn!(session = %request.session_id, "conversation write-back failed: {e}");
            }
        }
        drop(guard);
    }
}
