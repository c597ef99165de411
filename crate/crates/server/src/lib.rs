//! HTTP/JSON facade over [`Engine`]. Handlers add no semantics: every
//! response body is what the engine returned, serialized.
//!
//! | method | path                 | body                          |
//! |--------|----------------------|-------------------------------|
//! | GET    | `/schema`            |                               |
//! | POST   | `/query`             | `{"q": "<query text>"}`       |
//! | POST   | `/ingest?table=&partition=` | CSV                    |
//! | GET    | `/cubes`             |                               |
//! | POST   | `/cubes/build`       | `{"fact": .., "policy": ..}`  |
//! | POST   | `/cubes/merge-delta` | `{"fact": ..}`                |
//! | GET    | `/quality`           |                               |
//!
//! There is no authentication; bind to loopback unless the network is trusted.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use agrodw_core::cube::CubePolicy;
use agrodw_core::engine::{Engine, EngineError, ErrorKind};
use agrodw_core::olap::OlapError;
use agrodw_core::storage::Partition;
use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiCode {
    ParseError,
    SemanticError,
    NotFound,
    Conflict,
    Internal,
}

impl ApiCode {
    pub fn status(self) -> StatusCode {
        match self {
            ApiCode::ParseError | ApiCode::SemanticError => StatusCode::BAD_REQUEST,
            ApiCode::NotFound => StatusCode::NOT_FOUND,
            ApiCode::Conflict => StatusCode::CONFLICT,
            ApiCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ApiCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Json>,
}

impl ApiError {
    fn new(code: ApiCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: None,
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let code = match e.kind() {
            ErrorKind::Parse => ApiCode::ParseError,
            ErrorKind::Semantic => ApiCode::SemanticError,
            ErrorKind::NotFound => ApiCode::NotFound,
            ErrorKind::Conflict => ApiCode::Conflict,
            ErrorKind::Internal => ApiCode::Internal,
        };
        let detail = match &e {
            EngineError::Olap(OlapError::Parse { line, column, .. }) => {
                Some(serde_json::json!({"line": line, "column": column}))
            }
            EngineError::Olap(OlapError::Semantic { name, .. }) => Some(serde_json::json!({"name": name})),
            _ => None,
        };
        if code == ApiCode::Internal {
            tracing::error!("internal error: {e}");
        }
        Self {
            code,
            message: e.to_string(),
            detail,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::to_string(&self).expect("error serializes");
        (self.code.status(), [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn json_body(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn json_of<T: Serialize>(v: &T) -> Response {
    json_body(serde_json::to_string(v).expect("response serializes"))
}

fn parse_body<T: for<'de> Deserialize<'de>>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(ApiCode::ParseError, format!("invalid request body: {e}")))
}

/// Runs blocking engine work off the async executor.
async fn blocking<T, F>(engine: &Arc<Engine>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T, EngineError> + Send + 'static,
{
    let engine = engine.clone();
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError::new(ApiCode::Internal, e.to_string()))?
        .map_err(ApiError::from)
}

async fn schema(State(engine): State<Arc<Engine>>) -> ApiResult {
    Ok(json_of(engine.schema().as_ref()))
}

#[derive(Deserialize)]
struct QueryBody {
    q: String,
}

async fn query(State(engine): State<Arc<Engine>>, body: Bytes) -> ApiResult {
    let QueryBody { q } = parse_body(&body)?;
    let grid = blocking(&engine, move |e| e.query_text(&q)).await?;
    Ok(json_body(grid.to_json()))
}

async fn ingest(State(engine): State<Arc<Engine>>, Query(params): Query<HashMap<String, String>>, body: Bytes) -> ApiResult {
    let table = params
        .get("table")
        .cloned()
        .ok_or_else(|| ApiError::new(ApiCode::SemanticError, "missing `table` query parameter"))?;
    let partition: Partition = match params.get("partition") {
        None => Partition::Base,
        Some(p) => p.parse().map_err(|e: String| ApiError::new(ApiCode::SemanticError, e))?,
    };
    let out = blocking(&engine, move |e| e.ingest(&table, &body, "http", partition)).await?;
    Ok(json_of(&out))
}

async fn cubes(State(engine): State<Arc<Engine>>) -> ApiResult {
    let list = blocking(&engine, |e| e.cubes()).await?;
    Ok(json_of(&list))
}

#[derive(Deserialize)]
struct BuildBody {
    fact: String,
    #[serde(default = "full")]
    policy: CubePolicy,
}

fn full() -> CubePolicy {
    CubePolicy::Full
}

async fn build(State(engine): State<Arc<Engine>>, body: Bytes) -> ApiResult {
    let BuildBody { fact, policy } = parse_body(&body)?;
    let summary = blocking(&engine, move |e| e.build_cube(&fact, policy)).await?;
    Ok(json_of(&summary))
}

#[derive(Deserialize)]
struct FactBody {
    fact: String,
}

async fn merge_delta(State(engine): State<Arc<Engine>>, body: Bytes) -> ApiResult {
    let FactBody { fact } = parse_body(&body)?;
    let absorbed = blocking(&engine, move |e| e.merge_delta(&fact)).await?;
    Ok(json_of(&serde_json::json!({ "absorbed": absorbed })))
}

async fn quality(State(engine): State<Arc<Engine>>) -> ApiResult {
    let report = blocking(&engine, |e| Ok(e.quality())).await?;
    Ok(json_of(&report))
}

async fn fallback() -> ApiError {
    ApiError::new(ApiCode::NotFound, "no such endpoint")
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/schema", get(schema))
        .route("/query", post(query))
        .route("/ingest", post(ingest))
        .route("/cubes", get(cubes))
        .route("/cubes/build", post(build))
        .route("/cubes/merge-delta", post(merge_delta))
        .route("/quality", get(quality))
        .fallback(fallback)
        .with_state(engine)
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Serve(#[source] std::io::Error),
}

/// A running server; dropping the handle leaves it running.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<Result<(), std::io::Error>>,
}

impl ServerHandle {
    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(self) -> Result<(), ServerError> {
        let _ = self.shutdown.send(());
        match self.task.await {
            Ok(r) => r.map_err(ServerError::Serve),
            Err(e) => Err(ServerError::Serve(std::io::Error::other(e))),
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub async fn start(engine: Arc<Engine>, addr: SocketAddr) -> Result<ServerHandle, ServerError> {
    let listener = TcpListener::bind(addr).await.map_err(|source| ServerError::Bind { addr, source })?;
    let addr = listener.local_addr().map_err(|source| ServerError::Bind { addr, source })?;
    let (tx, rx) = oneshot::channel();
    let app = router(engine);
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(ServerHandle {
        addr,
        shutdown: tx,
        task,
    })
}

/// Serves until `signal` resolves, then shuts down gracefully.
pub async fn serve(engine: Arc<Engine>, addr: SocketAddr, signal: impl Future<Output = ()>) -> Result<(), ServerError> {
    let handle = start(engine, addr).await?;
    tracing::info!("listening on http://{}", handle.addr);
    signal.await;
    handle.shutdown().await
}
