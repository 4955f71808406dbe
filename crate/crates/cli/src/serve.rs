use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use xrguide_core::session::{ClientMessage, Envelope, ErrorCode, ServerMessage, SessionHub, PROTOCOL_VERSION};
use xrguide_core::Digest;

pub fn router(hub: Arc<SessionHub>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/ws", get(ws_upgrade))
        .route("/blobs", post(put_blob))
        .route("/blobs/{digest}", get(get_blob))
        .with_state(hub)
}

pub async fn serve(hub: Arc<SessionHub>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    let local = listener.local_addr()?;
    println!("listening on {local}");
    tracing::info!(%local, "serving");
    axum::serve(listener, router(hub)).await?;
    Ok(())
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "protocol": PROTOCOL_VERSION}))
}

async fn put_blob(State(hub): State<Arc<SessionHub>>, body: Bytes) -> Response {
    match hub.cache().put(&body) {
        Ok(d) => (StatusCode::CREATED, Json(json!({"digest": d, "size": body.len()}))).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn get_blob(State(hub): State<Arc<SessionHub>>, Path(digest): Path<String>) -> Response {
    let Some(d) = Digest::from_hex(digest) else {
        return (StatusCode::BAD_REQUEST, "malformed digest").into_response();
    };
    match hub.cache().get(&d) {
        Some(bytes) => ([(header::CONTENT_TYPE, "application/octet-stream")], bytes.to_vec()).into_response(),
        None => (StatusCode::NOT_FOUND, "unknown blob").into_response(),
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(hub): State<Arc<SessionHub>>) -> Response {
    ws.on_upgrade(move |socket| client_loop(socket, hub))
}

fn rejection(detail: String) -> Envelope<ServerMessage> {
    Envelope::new("", 0, ServerMessage::Error { code: ErrorCode::PayloadInvalid, detail })
}

async fn client_loop(mut socket: WebSocket, hub: Arc<SessionHub>) {
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
            Message::Close(_) => break,
            _ => continue,
        };
        let replies = match serde_json::from_str::<Envelope<ClientMessage>>(&text) {
            Ok(env) => {
                let hub = Arc::clone(&hub);
                match tokio::task::spawn_blocking(move || hub.handle(env)).await {
                    Ok(r) => r,
                    Err(e) => vec![rejection(format!("session task failed: {e}"))],
                }
            }
            Err(e) => vec![rejection(e.to_string())],
        };
        for r in replies {
            let body = serde_json::to_string(&r).expect("server messages serialize");
            if socket.send(Message::Text(body.into())).await.is_err() {
                return;
            }
        }
    }
}
