//! HTTP chat service.
//!
//! Each `POST /api/chat` runs the whole pipeline (scene extraction,
//! retrieval, prompt assembly, generation) and streams the result back as
//! newline-delimited JSON [`ChatEvent`]s: zero or more tokens followed by
//! exactly one `eos` or `error`.

pub mod api;
pub mod client;
mod http;
mod registry;
mod service;

pub use api::{ChatEvent, ChatRequest, ChatStats, ModelInfo, RagToggles};
pub use client::{ChatClient, ClientError, NdjsonDecoder};
pub use http::{router, serve};
pub use registry::{BackendConfig, BackendRegistry, BackendSpec};
pub use service::{ChatService, Rejection, ServiceConfig, ServiceError};
