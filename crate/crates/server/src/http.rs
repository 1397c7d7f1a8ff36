use std::sync::Arc;
use std::time::Instant;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream;
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use crate::api::{ChatEvent, ChatRequest};
use crate::service::{ChatService, Rejection};

const NDJSON: &str = "application/x-ndjson";

pub fn router(service: Arc<ChatService>) -> Router {
    Router::new()
        .route("/api/chat", post(chat))
        .route("/api/session/reset", post(reset))
        .route("/api/models", get(models))
        .route("/api/health", get(health))
        .with_state(service)
}

pub async fn serve(listener: TcpListener, service: Arc<ChatService>) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}

fn ndjson_error(status: StatusCode, message: impl Into<String>) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, NDJSON)],
        ChatEvent::error(message).to_line(),
    )
        .into_response()
}

fn rejection_status(r: &Rejection) -> StatusCode {
    match r {
        Rejection::BadRequest(_) => StatusCode::BAD_REQUEST,
        Rejection::UnknownModel(_) => StatusCode::NOT_FOUND,
        Rejection::SessionBusy(_) => StatusCode::CONFLICT,
    }
}

async fn chat(State(service): State<Arc<ChatService>>, body: Bytes) -> Response {
    let received = Instant::now();
    let request: ChatRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return ndjson_error(StatusCode::BAD_REQUEST, format!("bad request: {e}")),
    };
    let rx = match service.handle_chat(request, received) {
        Ok(rx) => rx,
        Err(r) => return ndjson_error(rejection_status(&r), r.to_string()),
    };
    let lines = stream::unfold(rx, |mut rx| async move {
        let event = rx.recv().await?;
        Some((Ok::<_, std::convert::Infallible>(Bytes::from(event.to_line())), rx))
    });
    (
        [(header::CONTENT_TYPE, NDJSON), (header::CACHE_CONTROL, "no-cache")],
        Body::from_stream(lines),
    )
        .into_response()
}

#[derive(Deserialize)]
struct ResetRequest {
    session_id: String,
}

async fn reset(State(service): State<Arc<ChatService>>, body: Bytes) -> Response {
    let request: ResetRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({"ok": false, "error": e.to_string()})),
            )
                .into_response();
        }
    };
    match service.reset_session(&request.session_id).await {
        Ok(()) => Json(json!({"ok": true})).into_response(),
        Err(r) => (rejection_status(&r), Json(json!({"ok": false, "error": r.to_string()}))).into_response(),
    }
}

async fn models(State(service): State<Arc<ChatService>>) -> Response {
    Json(service.list_models().await).into_response()
}

async fn health(State(service): State<Arc<ChatService>>) -> Response {
    Json(json!({"status": "ok", "index_chunks": service.index_chunks()})).into_response()
}
