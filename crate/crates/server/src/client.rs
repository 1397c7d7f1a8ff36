//! Minimal client for the chat service, used by the benchmark harness.

use std::time::Duration;

use futures::StreamExt;
use serde_json::Value;
use thiserror::Error;

use crate::api::{ChatEvent, ChatRequest, ModelInfo};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("HTTP error: {0}")]
    Http(#[from] reqwest::Error),
    #[error("service returned {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed event line: {0}")]
    BadEvent(String),
    #[error("stream ended without a terminal event")]
    Truncated,
}

/// Splits an arbitrarily fragmented byte stream into NDJSON events.
#[derive(Debug, Default)]
pub struct NdjsonDecoder {
    buf: Vec<u8>,
}

impl NdjsonDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds bytes and returns every complete event they finish.
    pub fn push(&mut self, bytes: &[u8]) -> Vec<Result<ChatEvent, ClientError>> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        while let Some(nl) = self.buf.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = self.buf.drain(..=nl).collect();
            let line = &line[..line.len() - 1];
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            out.push(
                serde_json::from_slice(line)
                    .map_err(|e| ClientError::BadEvent(format!("{e}: {}", String::from_utf8_lossy(line)))),
            );
        }
        out
    }

    /// Bytes received after the last newline.
    pub fn pending(&self) -> &[u8] {
        &self.buf
    }
}

/// An in-progress chat response.
pub struct ChatStream {
    body: futures::stream::BoxStream<'static, reqwest::Result<bytes::Bytes>>,
    decoder: NdjsonDecoder,
    ready: std::collections::VecDeque<Result<ChatEvent, ClientError>>,
    done: bool,
}

impl ChatStream {
    /// Next event, or `None` after the terminal event has been returned.
    pub async fn next_event(&mut self) -> Option<Result<ChatEvent, ClientError>> {
        loop {
            if let Some(ev) = self.ready.pop_front() {
                if matches!(&ev, Ok(e) if e.is_terminal()) {
                    self.done = true;
                    self.ready.clear();
                }
                return Some(ev);
            }
            if self.done {
                return None;
            }
            match self.body.next().await {
                Some(Ok(chunk)) => self.ready.extend(self.decoder.push(&chunk)),
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
                None => {
                    self.done = true;
                    return Some(Err(ClientError::Truncated));
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChatClient {
    base: String,
    http: reqwest::Client,
}

impl ChatClient {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        let http = reqwest::Client::builder()
            .connect_timeout(Duration::from_secs(5))
            .build()?;
        Ok(ChatClient {
            base: base_url.trim_end_matches('/').to_string(),
            http,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn check(resp: reqwest::Response) -> Result<reqwest::Response, ClientError> {
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let body = resp.text().await.unwrap_or_default();
        Err(ClientError::Status { status, body })
    }

    pub async fn health(&self) -> Result<Value, ClientError> {
        let resp = Self::check(self.http.get(self.url("/api/health")).send().await?).await?;
        serde_json::from_slice(&resp.bytes().await?).map_err(|e| ClientError::BadEvent(e.to_string()))
    }

    pub async fn models(&self) -> Result<Vec<ModelInfo>, ClientError> {
        let resp = Self::check(self.http.get(self.url("/api/models")).send().await?).await?;
        serde_json::from_slice(&resp.bytes().await?).map_err(|e| ClientError::BadEvent(e.to_string()))
    }

    pub async fn reset(&self, session_id: &str) -> Result<(), ClientError> {
        let body = serde_json::json!({ "session_id": session_id }).to_string();
        let req = self
            .http
            .post(self.url("/api/session/reset"))
            .header("content-type", "application/json");
        Self::check(req.body(body).send().await?).await?;
        Ok(())
    }

    /// Sends `request`. Rejections that come back as a single error line
    /// are surfaced as a stream holding that one event.
    pub async fn chat(&self, request: &ChatRequest) -> Result<ChatStream, ClientError> {
        let body = serde_json::to_vec(request).expect("request serializes");
        let resp = self
            .http
            .post(self.url("/api/chat"))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await?;
        let is_ndjson = resp
            .headers()
            .get("content-type")
            .is_some_and(|v| v.as_bytes().starts_with(b"application/x-ndjson"));
        if !resp.status().is_success() && !is_ndjson {
            return Err(Self::check(resp).await.err().unwrap());
        }
        Ok(ChatStream {
            body: resp.bytes_stream().boxed(),
            decoder: NdjsonDecoder::new(),
            ready: Default::default(),
            done: false,
        })
    }
}
