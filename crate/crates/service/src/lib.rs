//! HTTP front for a scholarly corpus, plus the matching blocking client.
//!
//! `GET /api/<name>?param=value` answers with the envelope document from
//! [`apiplan_core::corpus::envelope`]. Bodies depend only on the corpus and
//! the request, so a restarted server answers with identical bytes.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use apiplan_core::client::{ApiClient, ApiError};
use apiplan_core::corpus::{envelope, parse_envelope, query_endpoint, Corpus};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde_json::Value;
use tokio::sync::oneshot;

fn status_for(result: &Result<Value, ApiError>) -> StatusCode {
    match result {
        Ok(_) => StatusCode::OK,
        Err(ApiError::NotFound(_)) => StatusCode::NOT_FOUND,
        Err(ApiError::BadRequest(_)) => StatusCode::BAD_REQUEST,
        Err(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn call_api(
    State(corpus): State<Arc<Corpus>>,
    Path(api): Path<String>,
    Query(params): Query<BTreeMap<String, String>>,
) -> Response {
    let params: BTreeMap<String, Value> = params.into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    let result = query_endpoint(&corpus, &api, &params);
    (status_for(&result), [(header::CONTENT_TYPE, "application/json")], envelope(&result)).into_response()
}

async fn snapshot(State(corpus): State<Arc<Corpus>>) -> Response {
    let body = envelope(&Ok(serde_json::json!({
        "snapshot_id": corpus.snapshot_id,
        "seed": corpus.seed,
        "scholars": corpus.scholars.len(),
        "publications": corpus.publications.len(),
    })));
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn unknown_route() -> Response {
    let result = Err(ApiError::NotFound("no such route; use /api/<name>".into()));
    (status_for(&result), [(header::CONTENT_TYPE, "application/json")], envelope(&result)).into_response()
}

pub fn router(corpus: Arc<Corpus>) -> Router {
    Router::new()
        .route("/api/{name}", get(call_api))
        .route("/snapshot", get(snapshot))
        .fallback(unknown_route)
        .with_state(corpus)
}

fn runtime() -> std::io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

/// Serves until the process exits. `ready` sees the bound address first.
pub fn serve_forever(corpus: Arc<Corpus>, addr: SocketAddr, ready: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        ready(listener.local_addr()?);
        axum::serve(listener, router(corpus)).await
    })
}

/// A server on a background thread; dropping it shuts the server down.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take().map(JoinHandle::join) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(std::io::Error::other("server thread panicked")),
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves on a new thread.
pub fn spawn(corpus: Arc<Corpus>, addr: SocketAddr) -> std::io::Result<ServiceHandle> {
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let thread = std::thread::spawn(move || -> std::io::Result<()> {
        let rt = runtime()?;
        rt.block_on(async move {
            let listener = match tokio::net::TcpListener::bind(addr).await {
                Ok(l) => l,
                Err(e) => {
                    let _ = addr_tx.send(Err(std::io::Error::new(e.kind(), e.to_string())));
                    return Err(e);
                }
            };
            let _ = addr_tx.send(listener.local_addr());
            axum::serve(listener, router(corpus))
                .with_graceful_shutdown(async {
                    let _ = stop_rx.await;
                })
                .await
        })
    });
    let addr = addr_rx.recv().map_err(|_| std::io::Error::other("server thread exited before binding"))??;
    Ok(ServiceHandle { addr, stop: Some(stop_tx), thread: Some(thread) })
}

/// Blocking client for a running service.
#[derive(Debug, Clone)]
pub struct HttpClient {
    base: String,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, ApiError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ApiError::Transport(e.to_string()))?;
        Ok(HttpClient { base: base_url.trim_end_matches('/').to_string(), http })
    }

    /// Raw response body, for byte-level comparisons.
    pub fn get_raw(&self, api: &str, args: &BTreeMap<String, Value>) -> Result<String, ApiError> {
        let params = args.iter().map(|(k, v)| {
            let text = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            (k.clone(), text)
        });
        let url = reqwest::Url::parse_with_params(&format!("{}/api/{api}", self.base), params)
            .map_err(|e| ApiError::Transport(format!("bad url: {e}")))?;
        let resp = self.http.get(url).send().map_err(|e| ApiError::Transport(e.to_string()))?;
        resp.text().map_err(|e| ApiError::Transport(e.to_string()))
    }

    pub fn snapshot_id(&self) -> Result<String, ApiError> {
        let resp =
            self.http.get(format!("{}/snapshot", self.base)).send().map_err(|e| ApiError::Transport(e.to_string()))?;
        let body = resp.text().map_err(|e| ApiError::Transport(e.to_string()))?;
        let data = parse_envelope(&body)?;
        data.get("snapshot_id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ApiError::Protocol("missing snapshot_id".into()))
    }
}

impl ApiClient for HttpClient {
    fn call(&self, api: &str, args: &BTreeMap<String, Value>) -> Result<Value, ApiError> {
        parse_envelope(&self.get_raw(api, args)?)
    }
}
