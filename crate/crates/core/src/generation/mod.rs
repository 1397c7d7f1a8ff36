//! Streaming generation backends.
//!
//! Every backend streams tokens into a [`TokenSink`] and returns
//! [`GenerationStats`] once the stream is complete. [`generate_stream`] wraps
//! that into a channel of [`StreamEvent`]s carrying exactly one terminal
//! event.

mod external;
mod mock;
pub mod protocol;

use std::fmt;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc::UnboundedSender;
use tokio_util::sync::CancellationToken;

pub use external::{connect_external, ExternalBackend, DEFAULT_CONNECT_TIMEOUT};
pub use mock::{mock_echo_tokens, mock_hash_tokens, MockEchoBackend, MockHashBackend, MOCK_TOKEN_CAP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub max_new_tokens: u32,
    pub temperature: f32,
    pub seed: u64,
    /// Mock backends only: pause before each token.
    pub inter_token_delay_ms: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_new_tokens: 1024,
            temperature: 0.2,
            seed: 0,
            inter_token_delay_ms: 0,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.max_new_tokens == 0 {
            return Err(GenerationError::InvalidParams(
                "max_new_tokens must be at least 1".into(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GenerationError::InvalidParams(
                "temperature must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub prompt_tokens: usize,
    pub output_tokens: usize,
    pub backend_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BackendKind {
    MockHash,
    MockEcho,
    External { address: String },
}

impl BackendKind {
    pub fn label(&self) -> &'static str {
        match self {
            BackendKind::MockHash => "mock-hash",
            BackendKind::MockEcho => "mock-echo",
            BackendKind::External { .. } => "external",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::External { address } => write!(f, "external({address})"),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    Token(String),
    Eos(GenerationStats),
    Error(String),
}

impl StreamEvent {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, StreamEvent::Token(_))
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("cancelled")]
    Cancelled,
    #[error("cannot connect to {address}: {message}")]
    Connect { address: String, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("connection lost: {0}")]
    Io(#[from] std::io::Error),
}

/// Receives tokens as they are produced.
pub trait TokenSink: Send {
    fn token(&mut self, text: &str);
}

impl<F: FnMut(&str) + Send> TokenSink for F {
    fn token(&mut self, text: &str) {
        self(text)
    }
}

#[async_trait]
pub trait GenerationBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    async fn is_ready(&self) -> bool {
        true
    }

    /// Streams the completion of `prompt` into `sink`. Implementations stop
    /// with [`GenerationError::Cancelled`] once `cancel` fires.
    async fn stream(
        &self,
        prompt: &str,
        params: &GenerationParams,
        sink: &mut dyn TokenSink,
        cancel: &CancellationToken,
    ) -> Result<GenerationStats, GenerationError>;
}

/// Runs `backend` and forwards tokens followed by exactly one `Eos` or
/// `Error` event. The receiver may hang up early; that is not an error here.
pub async fn generate_stream(
    backend: &dyn GenerationBackend,
    prompt: &str,
    params: &GenerationParams,
    events: UnboundedSender<StreamEvent>,
    cancel: &CancellationToken,
) -> Result<GenerationStats, GenerationError> {
    let result = match params.validate() {
        Ok(()) => {
            let tx = events.clone();
            let mut sink = move |t: &str| {
                let _ = tx.send(StreamEvent::Token(t.to_string()));
            };
            backend.stream(prompt, params, &mut sink, cancel).await
        }
        Err(e) => Err(e),
    };
    let terminal = match &result {
        Ok(stats) => StreamEvent::Eos(*stats),
        Err(e) => StreamEvent::Error(e.to_string()),
    };
    let _ = events.send(terminal);
    result
}
