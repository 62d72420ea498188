//! HTTP front for any in-process [`Scorer`], used by `ctxprobe serve-mock`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use super::wire::{Health, WireError, WireRequest, WireResponse};
use super::Scorer;
use crate::error::{Error, Result};

type Shared = Arc<dyn Scorer>;

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(WireError { error: msg.into() })).into_response()
}

async fn health(State(scorer): State<Shared>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model: scorer.name(),
    })
}

async fn score(State(scorer): State<Shared>, body: Bytes) -> Response {
    let wire: WireRequest = match serde_json::from_slice(&body) {
        Ok(w) => w,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let req = match wire.into_request() {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    match scorer.score(&req) {
        Ok(p) => Json(WireResponse::from(p)).into_response(),
        Err(e @ Error::Invalid(_)) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(scorer: Shared) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/score", post(score))
        .with_state(scorer)
}

/// Serve until the future resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    scorer: Shared,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(scorer))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}

/// Bind `addr` (port 0 picks a free port) and serve in the background.
pub fn spawn(scorer: Shared, addr: SocketAddr) -> Result<ServerHandle> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| Error::Transport(e.to_string()))?;
    let listener = rt
        .block_on(tokio::net::TcpListener::bind(addr))
        .map_err(|e| Error::Transport(format!("bind {addr}: {e}")))?;
    let bound = listener
        .local_addr()
        .map_err(|e| Error::Transport(e.to_string()))?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(serve(listener, scorer, async {
            let _ = rx.await;
        }))
    });
    Ok(ServerHandle {
        addr: bound,
        stop: Some(tx),
        thread: Some(thread),
    })
}
