//! HTTP read API over the gateway tables.

use std::net::SocketAddr;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::oneshot;

use crate::gateway::SharedGateway;

fn valid_sku(sku: &str) -> bool {
    !sku.is_empty() && sku.len() <= 64 && sku.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b))
}

fn error(status: StatusCode, msg: &str) -> Response {
    (status, Json(json!({ "error": msg }))).into_response()
}

async fn shipment(State(gw): State<SharedGateway>, Path(sku): Path<String>) -> Response {
    if !valid_sku(&sku) {
        return error(StatusCode::BAD_REQUEST, "malformed sku");
    }
    let gw = gw.read().unwrap();
    match gw.latest(&sku) {
        Some(r) => Json(r.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, "sku not found"),
    }
}

#[derive(Deserialize)]
struct Range {
    from: Option<u64>,
    to: Option<u64>,
}

async fn audit(State(gw): State<SharedGateway>, Path(sku): Path<String>, Query(q): Query<Range>) -> Response {
    if !valid_sku(&sku) {
        return error(StatusCode::BAD_REQUEST, "malformed sku");
    }
    Json(gw.read().unwrap().audit(&sku, q.from, q.to)).into_response()
}

async fn stats(State(gw): State<SharedGateway>) -> Response {
    Json(gw.read().unwrap().stats()).into_response()
}

async fn health() -> Response {
    Json(json!({ "status": "ok" })).into_response()
}

pub fn router(gw: SharedGateway) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/stats", get(stats))
        .route("/shipments/{sku}", get(shipment))
        .route("/shipments/{sku}/audit", get(audit))
        .with_state(gw)
}

pub async fn serve(listener: tokio::net::TcpListener, gw: SharedGateway) -> std::io::Result<()> {
    axum::serve(listener, router(gw)).await
}

/// A gateway HTTP server on its own runtime thread. Stops when dropped.
pub struct GatewayServer {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl GatewayServer {
    pub fn start(addr: SocketAddr, gw: SharedGateway) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()?;
        let thread = std::thread::Builder::new().name("gateway-http".into()).spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                let server = axum::serve(listener, router(gw)).with_graceful_shutdown(async {
                    let _ = rx.await;
                });
                if let Err(e) = server.await {
                    tracing::error!("gateway http: {e}");
                }
            });
        })?;
        Ok(Self {
            addr,
            stop: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for GatewayServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sku_path_rules() {
        assert!(valid_sku("SKU-1"));
        assert!(valid_sku("a.b_c"));
        assert!(!valid_sku(""));
        assert!(!valid_sku("a b"));
        assert!(!valid_sku(&"x".repeat(65)));
    }
}
