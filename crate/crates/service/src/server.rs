//! HTTP front end.
//!
//! A single writer thread owns the store and the node. Mutating requests
//! are queued to it in arrival order; after each batch it persists, then
//! publishes an immutable copy of the node that read requests are served
//! from without waiting on the writer.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use std::thread;

use axum::body::{to_bytes, Body};
use axum::extract::{Query, State};
use axum::http::{HeaderMap, Method as HttpMethod, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use serde_json::Value;
use tokio::sync::{mpsc, oneshot};

use ses_core::Node;

use crate::api::{self, ApiError, Method, Request};
use crate::store::Store;

pub const ADMIN_KEY_HEADER: &str = "x-admin-key";
const MAX_BODY_BYTES: usize = 64 * 1024;
const QUEUE_DEPTH: usize = 1_024;

type Reply = oneshot::Sender<Result<Value, ApiError>>;

struct Shared {
    jobs: mpsc::Sender<(Request, Reply)>,
    published: RwLock<Arc<Node>>,
    admin_key: String,
}

#[derive(Clone)]
pub struct Service {
    shared: Arc<Shared>,
}

impl Service {
    /// Starts the writer thread. It exits, releasing the store, once every
    /// clone of the service is dropped.
    pub fn start(store: Store, node: Node, admin_key: String) -> (Service, thread::JoinHandle<()>) {
        let (jobs, rx) = mpsc::channel(QUEUE_DEPTH);
        let shared = Arc::new(Shared { jobs, published: RwLock::new(Arc::new(node.clone())), admin_key });
        let weak = Arc::downgrade(&shared);
        let handle = thread::Builder::new()
            .name("ses-writer".into())
            .spawn(move || writer(store, node, rx, weak))
            .expect("spawn writer thread");
        (Service { shared }, handle)
    }

    pub fn snapshot(&self) -> Arc<Node> {
        self.shared.published.read().expect("publish lock").clone()
    }

    /// Runs one request, checking the admin key for admin endpoints.
    pub async fn call(&self, req: Request, admin_key: Option<&str>) -> Result<Value, ApiError> {
        if req.requires_admin() && !key_matches(admin_key, &self.shared.admin_key) {
            return Err(ApiError::unauthorized());
        }
        if !req.is_mutating() {
            return api::query(&self.snapshot(), &req);
        }
        let (reply, rx) = oneshot::channel();
        self.shared
            .jobs
            .send((req, reply))
            .await
            .map_err(|_| ApiError::internal("store_failed", "the writer has stopped"))?;
        rx.await.map_err(|_| ApiError::internal("store_failed", "the writer has stopped"))?
    }

    pub fn router(&self) -> Router {
        Router::new().fallback(handle).with_state(self.clone())
    }
}

fn key_matches(given: Option<&str>, expected: &str) -> bool {
    let Some(given) = given else { return false };
    let (a, b) = (given.as_bytes(), expected.as_bytes());
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn writer(
    mut store: Store,
    mut node: Node,
    mut rx: mpsc::Receiver<(Request, Reply)>,
    shared: std::sync::Weak<Shared>,
) {
    let mut failed = false;
    while let Some(first) = rx.blocking_recv() {
        let mut batch = vec![first];
        while let Ok(job) = rx.try_recv() {
            batch.push(job);
        }
        let mut replies = Vec::with_capacity(batch.len());
        for (req, reply) in batch {
            let result = if failed {
                Err(ApiError::internal("store_failed", "an earlier write failed; restart the service"))
            } else {
                let result = api::execute(&mut node, &req);
                match store.persist(&mut node) {
                    Ok(()) => result,
                    Err(e) => {
                        failed = true;
                        Err(e)
                    }
                }
            };
            replies.push((reply, result));
        }
        if !failed {
            if let Some(shared) = shared.upgrade() {
                *shared.published.write().expect("publish lock") = Arc::new(node.clone());
            }
        }
        for (reply, result) in replies {
            let _ = reply.send(result);
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

async fn handle(State(service): State<Service>, method: HttpMethod, uri: Uri, headers: HeaderMap, body: Body) -> Response {
    match route(&service, method, uri, headers, body).await {
        Ok(value) => Json(value).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn route(service: &Service, method: HttpMethod, uri: Uri, headers: HeaderMap, body: Body) -> Result<Value, ApiError> {
    let method = match method {
        HttpMethod::GET => Method::Get,
        HttpMethod::POST => Method::Post,
        other => return Err(ApiError::new("method_not_allowed", 405, format!("{other} is not supported"))),
    };
    let Query(query) = Query::<BTreeMap<String, String>>::try_from_uri(&uri)
        .map_err(|e| ApiError::malformed(format!("bad query string: {e}")))?;
    let body = to_bytes(body, MAX_BODY_BYTES)
        .await
        .map_err(|e| ApiError::malformed(format!("unreadable body: {e}")))?;
    let req = Request::from_http(method, uri.path(), &query, &body)
        .ok_or_else(|| ApiError::not_found(format!("no endpoint {}", uri.path())))??;
    let key = headers.get(ADMIN_KEY_HEADER).and_then(|v| v.to_str().ok());
    service.call(req, key).await
}

/// A server running on its own runtime thread.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

/// Binds `listen` and serves in the background until stopped.
pub fn spawn(listen: &str, store: Store, node: Node, admin_key: String) -> std::io::Result<RunningServer> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().worker_threads(2).build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(listen))?;
    let addr = listener.local_addr()?;
    let (shutdown, signal) = oneshot::channel::<()>();
    let thread = thread::spawn(move || {
        let (service, writer) = Service::start(store, node, admin_key);
        runtime.block_on(async move {
            let _ = axum::serve(listener, service.router())
                .with_graceful_shutdown(async {
                    let _ = signal.await;
                })
                .await;
        });
        drop(runtime);
        let _ = writer.join();
    });
    Ok(RunningServer { addr, shutdown: Some(shutdown), thread: Some(thread) })
}

/// Serves on the current thread until interrupted.
pub fn serve_forever(listen: &str, store: Store, node: Node, admin_key: String) -> std::io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let (service, writer) = Service::start(store, node, admin_key);
    let result = runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, service.router())
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    });
    drop(runtime);
    let _ = writer.join();
    result
}
