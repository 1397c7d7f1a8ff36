//! Client for an external model process speaking the framed protocol.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio::sync::Mutex;
use tokio_util::sync::CancellationToken;

use super::protocol::{
    frame_reader, frame_writer, recv_frame, send_frame, ClientFrame, FrameReader, FrameWriter, ServerFrame, WireParams,
};
use super::{BackendKind, GenerationBackend, GenerationError, GenerationParams, GenerationStats, TokenSink};

pub const DEFAULT_CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const READY_PROBE_TIMEOUT: Duration = Duration::from_secs(1);

struct Connection {
    reader: FrameReader<OwnedReadHalf>,
    writer: FrameWriter<OwnedWriteHalf>,
}

/// One TCP connection, one generation in flight at a time. A broken
/// connection is dropped and re-established on the next request.
pub struct ExternalBackend {
    address: String,
    timeout: Duration,
    conn: Mutex<Option<Connection>>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for ExternalBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalBackend")
            .field("address", &self.address)
            .finish()
    }
}

/// Connects and completes a ping/pong handshake within `timeout`.
pub async fn connect_external(address: &str, timeout: Duration) -> Result<ExternalBackend, GenerationError> {
    let backend = ExternalBackend::lazy(address, timeout);
    let conn = backend.handshake(timeout).await?;
    *backend.conn.lock().await = Some(conn);
    Ok(backend)
}

impl ExternalBackend {
    /// A handle that connects on first use.
    pub fn lazy(address: impl Into<String>, timeout: Duration) -> Self {
        ExternalBackend {
            address: address.into(),
            timeout,
            conn: Mutex::new(None),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    fn next_id(&self) -> String {
        format!("req-{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn connect_error(&self, message: impl Into<String>) -> GenerationError {
        GenerationError::Connect {
            address: self.address.clone(),
            message: message.into(),
        }
    }

    async fn handshake(&self, timeout: Duration) -> Result<Connection, GenerationError> {
        let attempt = async {
            let stream = TcpStream::connect(&self.address)
                .await
                .map_err(|e| self.connect_error(e.to_string()))?;
            stream.set_nodelay(true).ok();
            let (r, w) = stream.into_split();
            let mut conn = Connection {
                reader: frame_reader(r),
                writer: frame_writer(w),
            };
            let id = self.next_id();
            send_frame(&mut conn.writer, &ClientFrame::Ping { id: id.clone() }).await?;
            match recv_frame::<_, ServerFrame>(&mut conn.reader).await? {
                Some(ServerFrame::Pong { id: got }) if got == id => Ok(conn),
                Some(ServerFrame::Pong { id: got }) => Err(GenerationError::Protocol(format!(
                    "handshake pong id '{got}' does not match ping id '{id}'"
                ))),
                Some(other) => Err(GenerationError::Protocol(format!("expected pong, got {other:?}"))),
                None => Err(self.connect_error("connection closed during handshake")),
            }
        };
        tokio::time::timeout(timeout, attempt)
            .await
            .map_err(|_| self.connect_error(format!("handshake timed out after {timeout:?}")))?
    }

    async fn run(
        &self,
        conn: &mut Connection,
        prompt: &str,
        params: &GenerationParams,
        sink: &mut dyn TokenSink,
        cancel: &CancellationToken,
    ) -> Result<GenerationStats, GenerationError> {
        let id = self.next_id();
        send_frame(
            &mut conn.writer,
            &ClientFrame::Generate {
                id: id.clone(),
                prompt: prompt.to_string(),
                params: WireParams::from(params),
            },
        )
        .await?;

        let mut cancel_sent = false;
        let mut output_tokens = 0;
        loop {
            let frame = tokio::select! {
                frame = recv_frame::<_, ServerFrame>(&mut conn.reader) => frame?,
                _ = cancel.cancelled(), if !cancel_sent => {
                    send_frame(&mut conn.writer, &ClientFrame::Cancel { id: id.clone() }).await?;
                    cancel_sent = true;
                    continue;
                }
            };
            let Some(frame) = frame else {
                return Err(GenerationError::Io(std::io::ErrorKind::UnexpectedEof.into()));
            };
            if frame.id() != id {
                return Err(GenerationError::Protocol(format!(
                    "frame for '{}' while waiting on '{id}'",
                    frame.id()
                )));
            }
            match frame {
                ServerFrame::Token { text, .. } => {
                    output_tokens += 1;
                    sink.token(&text);
                }
                ServerFrame::Eos { stats, .. } => {
                    if stats.output_tokens != output_tokens {
                        tracing::warn!(
                            "backend reported {} tokens but streamed {output_tokens}",
                            stats.output_tokens
                        );
                    }
                    return Ok(GenerationStats { output_tokens, ..stats });
                }
                ServerFrame::Error { message, .. } => {
                    return Err(if cancel_sent {
                        GenerationError::Cancelled
                    } else {
                        GenerationError::Backend(message)
                    });
                }
                ServerFrame::Pong { .. } => {
                    return Err(GenerationError::Protocol("unexpected pong during generation".into()));
                }
            }
        }
    }
}

#[async_trait]
impl GenerationBackend for ExternalBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::External {
            address: self.address.clone(),
        }
    }

    async fn is_ready(&self) -> bool {
        let Ok(mut guard) = self.conn.try_lock() else {
            // A generation holds the connection.
            return true;
        };
        if guard.is_some() {
            return true;
        }
        match self.handshake(self.timeout.min(READY_PROBE_TIMEOUT)).await {
            Ok(conn) => {
                *guard = Some(conn);
                true
            }
            Err(_) => false,
        }
    }

    async fn stream(
        &self,
        prompt: &str,
        params: &GenerationParams,
        sink: &mut dyn TokenSink,
        cancel: &CancellationToken,
    ) -> Result<GenerationStats, GenerationError> {
        let mut guard = self.conn.lock().await;
        if guard.is_none() {
            *guard = Some(self.handshake(self.timeout).await?);
        }
        let conn = guard.as_mut().expect("connected");
        let result = self.run(conn, prompt, params, sink, cancel).await;
        if matches!(result, Err(GenerationError::Io(_) | GenerationError::Protocol(_))) {
            *guard = None;
        }
        result
    }
}
