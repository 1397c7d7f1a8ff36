//! Framed JSON protocol between the engine and an external model process.
//!
//! Each frame is a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON. Frames carry a `type` tag and a request `id`:
//!
//! | direction       | frames                                   |
//! |-----------------|------------------------------------------|
//! | client → server | `ping`, `generate`, `cancel`             |
//! | server → client | `pong`, `token`, `eos`, `error`          |
//!
//! A server answers any frame it cannot decode with an `error` frame.
//! [`serve_backend`] is a complete server for any [`GenerationBackend`].

use std::sync::Arc;

use bytes::Bytes;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncRead, AsyncWrite};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio_util::codec::{FramedRead, FramedWrite, LengthDelimitedCodec};
use tokio_util::sync::CancellationToken;

use super::{GenerationBackend, GenerationError, GenerationParams, GenerationStats};

pub const MAX_FRAME_BYTES: usize = 16 * 1024 * 1024;

/// Decoding parameters carried by a `generate` frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireParams {
    pub max_new_tokens: u32,
    pub temperature: f32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub inter_token_delay_ms: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

impl From<&GenerationParams> for WireParams {
    fn from(p: &GenerationParams) -> Self {
        WireParams {
            max_new_tokens: p.max_new_tokens,
            temperature: p.temperature,
            seed: p.seed,
            inter_token_delay_ms: p.inter_token_delay_ms,
        }
    }
}

impl From<WireParams> for GenerationParams {
    fn from(p: WireParams) -> Self {
        GenerationParams {
            max_new_tokens: p.max_new_tokens,
            temperature: p.temperature,
            seed: p.seed,
            inter_token_delay_ms: p.inter_token_delay_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientFrame {
    Ping {
        id: String,
    },
    Generate {
        id: String,
        prompt: String,
        params: WireParams,
    },
    Cancel {
        id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Pong { id: String },
    Token { id: String, text: String },
    Eos { id: String, stats: GenerationStats },
    Error { id: String, message: String },
}

impl ServerFrame {
    pub fn id(&self) -> &str {
        match self {
            ServerFrame::Pong { id }
            | ServerFrame::Token { id, .. }
            | ServerFrame::Eos { id, .. }
            | ServerFrame::Error { id, .. } => id,
        }
    }
}

pub fn codec() -> LengthDelimitedCodec {
    LengthDelimitedCodec::builder()
        .big_endian()
        .length_field_length(4)
        .max_frame_length(MAX_FRAME_BYTES)
        .new_codec()
}

pub type FrameReader<R> = FramedRead<R, LengthDelimitedCodec>;
pub type FrameWriter<W> = FramedWrite<W, LengthDelimitedCodec>;

pub fn frame_reader<R: AsyncRead>(r: R) -> FrameReader<R> {
    FramedRead::new(r, codec())
}

pub fn frame_writer<W: AsyncWrite>(w: W) -> FrameWriter<W> {
    FramedWrite::new(w, codec())
}

pub fn encode<T: Serialize>(frame: &T) -> Result<Bytes, GenerationError> {
    let bytes = serde_json::to_vec(frame).map_err(|e| GenerationError::Protocol(e.to_string()))?;
    if bytes.len() > MAX_FRAME_BYTES {
        return Err(GenerationError::Protocol(format!(
            "frame of {} bytes exceeds limit",
            bytes.len()
        )));
    }
    Ok(Bytes::from(bytes))
}

pub async fn send_frame<W, T>(w: &mut FrameWriter<W>, frame: &T) -> Result<(), GenerationError>
where
    W: AsyncWrite + Unpin,
    T: Serialize,
{
    w.send(encode(frame)?).await?;
    Ok(())
}

/// Next decoded frame, `None` on a clean end of stream.
pub async fn recv_frame<R, T>(r: &mut FrameReader<R>) -> Result<Option<T>, GenerationError>
where
    R: AsyncRead + Unpin,
    T: for<'de> Deserialize<'de>,
{
    match r.next().await {
        None => Ok(None),
        Some(Err(e)) => Err(e.into()),
        Some(Ok(buf)) => serde_json::from_slice(&buf)
            .map(Some)
            .map_err(|e| GenerationError::Protocol(format!("undecodable frame: {e}"))),
    }
}

/// Accepts connections forever, serving each with [`serve_connection`].
pub async fn serve_backend(listener: TcpListener, backend: Arc<dyn GenerationBackend>) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let backend = backend.clone();
        tokio::spawn(async move {
            if let Err(e) = serve_connection(stream, backend).await {
                tracing::debug!("connection from {peer} ended: {e}");
            }
        });
    }
}

fn error_frame(id: impl Into<String>, message: impl Into<String>) -> ServerFrame {
    ServerFrame::Error {
        id: id.into(),
        message: message.into(),
    }
}

/// Serves one client: answers pings, runs one generation at a time and
/// honours `cancel` frames while a generation streams.
pub async fn serve_connection(stream: TcpStream, backend: Arc<dyn GenerationBackend>) -> Result<(), GenerationError> {
    let (read, write) = stream.into_split();
    let mut frames = frame_reader(read);
    let mut writer = frame_writer(write);

    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<ServerFrame>();
    let write_task = tokio::spawn(async move {
        while let Some(frame) = out_rx.recv().await {
            if send_frame(&mut writer, &frame).await.is_err() {
                break;
            }
        }
    });

    let mut active: Option<(String, CancellationToken, tokio::task::JoinHandle<()>)> = None;
    let result = loop {
        let buf = match frames.next().await {
            None => break Ok(()),
            Some(Err(e)) => break Err(GenerationError::from(e)),
            Some(Ok(buf)) => buf,
        };
        if active.as_ref().is_some_and(|(_, _, h)| h.is_finished()) {
            active = None;
        }
        let frame: ClientFrame = match serde_json::from_slice(&buf) {
            Ok(f) => f,
            Err(e) => {
                let value: serde_json::Value = serde_json::from_slice(&buf).unwrap_or_default();
                let id = value.get("id").and_then(|v| v.as_str()).unwrap_or_default();
                let message = match value.get("type").and_then(|v| v.as_str()) {
                    Some(t) if !["ping", "generate", "cancel"].contains(&t) => format!("unknown frame type '{t}'"),
                    _ => format!("malformed frame: {e}"),
                };
                let _ = out_tx.send(error_frame(id, message));
                continue;
            }
        };
        match frame {
            ClientFrame::Ping { id } => {
                let _ = out_tx.send(ServerFrame::Pong { id });
            }
            ClientFrame::Cancel { id } => {
                if let Some((active_id, token, _)) = &active {
                    if *active_id == id {
                        token.cancel();
                    }
                }
            }
            ClientFrame::Generate { id, prompt, params } => {
                if active.is_some() {
                    let _ = out_tx.send(error_frame(id, "busy: a generation is already in progress"));
                    continue;
                }
                let token = CancellationToken::new();
                let handle = tokio::spawn(run_generation(
                    backend.clone(),
                    id.clone(),
                    prompt,
                    params.into(),
                    out_tx.clone(),
                    token.clone(),
                ));
                active = Some((id, token, handle));
            }
        }
    };

    if let Some((_, token, handle)) = active {
        token.cancel();
        let _ = handle.await;
    }
    drop(out_tx);
    let _ = write_task.await;
    result
}

async fn run_generation(
    backend: Arc<dyn GenerationBackend>,
    id: String,
    prompt: String,
    params: GenerationParams,
    out: mpsc::UnboundedSender<ServerFrame>,
    cancel: CancellationToken,
) {
    let result = match params.validate() {
        Ok(()) => {
            let tx = out.clone();
            let token_id = id.clone();
            let mut sink = move |t: &str| {
                let _ = tx.send(ServerFrame::Token {
                    id: token_id.clone(),
                    text: t.to_string(),
                });
            };
            backend.stream(&prompt, &params, &mut sink, &cancel).await
        }
        Err(e) => Err(e),
    };
    let terminal = match result {
        Ok(stats) => ServerFrame::Eos { id, stats },
        Err(e) => error_frame(id, e.to_string()),
    };
    let _ = out.send(terminal);
}
