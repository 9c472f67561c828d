//! HTTP service: document parsing, table retrieval and the two-annotator
//! labeling workflow.
//!
//! All responses are canonical JSON (JSON Lines for exports). Errors have the
//! shape `{"error": code, "detail": message}`.

mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tablescope_core::canonical::to_canonical_bytes;
use tablescope_core::parser::ParsedDocument;
use tablescope_core::{
    parse_document_json, parse_semantics, retrieve, Document, HeuristicScorer, Query, RemoteScorer,
    ScorerConfig, ScorerKind,
};
use tower_http::services::ServeDir;

pub use error::ServiceError;
pub use store::{AnnotationMode, Label, LabelRequest, Project, ProjectStatus, Store};

/// Header naming the annotator making a request. When present it must match
/// the body's `annotator_id`.
pub const ANNOTATOR_HEADER: &str = "x-annotator-id";

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Event log file; `None` keeps everything in memory.
    pub log_path: Option<PathBuf>,
    /// Page images laid out as `<dir>/<doc_id>/<page_id>.png`.
    pub page_images: Option<PathBuf>,
    /// Static annotation UI bundle served under `/ui`.
    pub ui_dir: Option<PathBuf>,
    /// Scoring endpoint used when a request selects the remote scorer
    /// without naming one.
    pub default_endpoint: Option<String>,
}

struct AppState {
    store: Mutex<Store>,
    cfg: ServiceConfig,
}

type Shared = Arc<AppState>;

impl AppState {
    fn store(&self) -> MutexGuard<'_, Store> {
        // A panic while holding the lock cannot leave the store half-written:
        // events are applied only after they are durably logged.
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn page_image(&self, doc_id: &str, page_id: u32) -> Option<String> {
        let dir = self.cfg.page_images.as_ref()?;
        dir.join(doc_id)
            .join(format!("{page_id}.png"))
            .is_file()
            .then(|| format!("/pages/{doc_id}/{page_id}.png"))
    }

    fn has_images(&self, doc: &Document) -> bool {
        doc.pages.iter().any(|p| self.page_image(&doc.doc_id, p.page_id).is_some())
    }
}

pub(crate) fn canonical_response<T: Serialize + ?Sized>(status: StatusCode, body: &T) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        to_canonical_bytes(body),
    )
        .into_response()
}

fn ok<T: Serialize>(body: &T) -> Response {
    canonical_response(StatusCode::OK, body)
}

fn json_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

fn document_from(value: &serde_json::Value) -> Result<Document, ServiceError> {
    let raw = serde_json::to_vec(value).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    parse_document_json(&raw).map_err(|e| ServiceError::InvalidDocument(e.to_string()))
}

/// Builds the router over a store opened from `cfg`.
pub fn app(cfg: ServiceConfig) -> Result<Router, ServiceError> {
    let store = match &cfg.log_path {
        Some(path) => Store::open(path)?,
        None => Store::in_memory(),
    };
    Ok(router(store, cfg))
}

pub fn router(store: Store, cfg: ServiceConfig) -> Router {
    let pages = cfg.page_images.clone();
    let ui = cfg.ui_dir.clone();
    let state = Arc::new(AppState {
        store: Mutex::new(store),
        cfg,
    });
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/tasks", get(tasks))
        .route("/projects/{id}/labels", post(submit_label))
        .route("/projects/{id}/conflicts", get(conflicts))
        .route("/projects/{id}/conflicts/resolve", post(resolve))
        .route("/projects/{id}/finalize", post(finalize))
        .route("/projects/{id}/export", get(export))
        .route("/parse", post(parse))
        .route("/retrieve", post(retrieve_tables))
        .with_state(state);
    if let Some(dir) = pages {
        app = app.nest_service("/pages", ServeDir::new(dir));
    }
    if let Some(dir) = ui {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    let app = app(cfg).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Blocking entry point for binaries without their own runtime.
pub fn serve_blocking(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(addr, cfg))
}

async fn health() -> Response {
    ok(&serde_json::json!({ "status": "ok" }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateProject {
    document: serde_json::Value,
    annotators: Vec<String>,
    #[serde(default)]
    project_id: Option<String>,
    #[serde(default)]
    annotation_mode: Option<AnnotationMode>,
}

async fn create_project(State(app): State<Shared>, body: Bytes) -> Result<Response, ServiceError> {
    let req: CreateProject = json_body(&body)?;
    let doc = document_from(&req.document)?;
    // Page images are used only when the sidecar actually has them.
    let mode = match req.annotation_mode {
        Some(AnnotationMode::TextOnly) => AnnotationMode::TextOnly,
        _ if app.has_images(&doc) => AnnotationMode::PageImage,
        _ => AnnotationMode::TextOnly,
    };
    let project = app.store().create_project(doc, req.annotators, req.project_id, mode)?;
    Ok(canonical_response(StatusCode::CREATED, &project))
}

async fn list_projects(State(app): State<Shared>) -> Response {
    ok(&app.store().projects())
}

async fn get_project(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ServiceError> {
    Ok(ok(&app.store().project(&id)?))
}

async fn tasks(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ServiceError> {
    let list = app.store().tasks(&id, |doc, page| app.page_image(doc, page))?;
    Ok(ok(&list))
}

fn check_header(headers: &HeaderMap, annotator_id: &str) -> Result<(), ServiceError> {
    match headers.get(ANNOTATOR_HEADER) {
        None => Ok(()),
        Some(v) => {
            let header = v
                .to_str()
                .map_err(|_| ServiceError::BadRequest("annotator header is not ASCII".into()))?;
            if header == annotator_id {
                Ok(())
            } else {
                Err(ServiceError::AnnotatorMismatch {
                    header: header.to_string(),
                    body: annotator_id.to_string(),
                })
            }
        }
    }
}

async fn submit_label(
    State(app): State<Shared>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let req: LabelRequest = json_body(&body)?;
    check_header(&headers, &req.annotator_id)?;
    let event = app.store().submit_label(&id, req)?;
    Ok(ok(&event))
}

async fn conflicts(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ServiceError> {
    Ok(ok(&app.store().conflicts(&id)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolveRequest {
    table_id: String,
    text_block_id: String,
    label: Label,
    #[serde(default)]
    note: String,
}

async fn resolve(
    State(app): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let req: ResolveRequest = json_body(&body)?;
    let record = app.store().resolve_conflict(
        &id,
        &req.table_id,
        &req.text_block_id,
        req.label.is_related(),
        req.note,
    )?;
    Ok(ok(&record))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FinalizeRequest {
    #[serde(default)]
    acknowledge_warnings: bool,
}

async fn finalize(
    State(app): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let req: FinalizeRequest = if body.iter().all(u8::is_ascii_whitespace) {
        FinalizeRequest::default()
    } else {
        json_body(&body)?
    };
    Ok(ok(&app.store().finalize(&id, req.acknowledge_warnings)?))
}

async fn export(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ServiceError> {
    let bytes = app.store().export_jsonl(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], bytes).into_response())
}

/// Scorer options shared by `/parse` and `/retrieve`.
#[derive(Deserialize, Default)]
struct ScoringOptions {
    #[serde(default)]
    theta: Option<f64>,
    #[serde(default)]
    scorer: Option<String>,
    #[serde(default)]
    endpoint: Option<String>,
    #[serde(default)]
    jobs: Option<usize>,
    #[serde(default)]
    batch_size: Option<usize>,
    #[serde(default)]
    page_window: Option<u32>,
    #[serde(default)]
    query_with_related_text: bool,
}

enum Backend {
    Heuristic,
    Remote(RemoteScorer),
}

impl ScoringOptions {
    fn resolve(&self, default_endpoint: Option<&String>) -> Result<(ScorerConfig, Backend), ServiceError> {
        let mut cfg = ScorerConfig::default();
        if let Some(t) = self.theta {
            cfg.theta = t;
        }
        if let Some(kind) = &self.scorer {
            cfg.scorer_kind = kind.parse().map_err(|e: tablescope_core::association::ConfigError| {
                ServiceError::InvalidConfig(e.0)
            })?;
        }
        cfg.remote_endpoint = self.endpoint.clone().or_else(|| default_endpoint.cloned());
        cfg.jobs = self.jobs.unwrap_or(cfg.jobs);
        cfg.batch_size = self.batch_size.unwrap_or(cfg.batch_size);
        cfg.page_window = self.page_window;
        cfg.query_with_related_text = self.query_with_related_text;
        cfg.validate().map_err(|e| ServiceError::InvalidConfig(e.0))?;
        let backend = match cfg.scorer_kind {
            ScorerKind::Heuristic => Backend::Heuristic,
            ScorerKind::Remote => {
                let url = cfg.remote_endpoint.clone().unwrap_or_default();
                Backend::Remote(RemoteScorer::new(url).batch_size(cfg.batch_size))
            }
            ScorerKind::LlmBaseline => {
                return Err(ServiceError::InvalidConfig(
                    "the LLM baseline replays offline replies and is available from the CLI only".into(),
                ))
            }
        };
        Ok((cfg, backend))
    }
}

fn run_parse(doc: &Document, backend: &Backend, cfg: &ScorerConfig) -> Result<ParsedDocument, ServiceError> {
    Ok(match backend {
        Backend::Heuristic => parse_semantics(doc, &HeuristicScorer, cfg)?,
        Backend::Remote(r) => parse_semantics(doc, r, cfg)?,
    })
}

async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Storage(format!("worker failed: {e}")))?
}

#[derive(Deserialize)]
struct ParseRequest {
    document: serde_json::Value,
    #[serde(flatten)]
    options: ScoringOptions,
}

async fn parse(State(app): State<Shared>, body: Bytes) -> Result<Response, ServiceError> {
    let req: ParseRequest = json_body(&body)?;
    let doc = document_from(&req.document)?;
    let (cfg, backend) = req.options.resolve(app.cfg.default_endpoint.as_ref())?;
    let parsed = blocking(move || run_parse(&doc, &backend, &cfg)).await?;
    Ok(ok(&parsed))
}

#[derive(Deserialize)]
struct RetrieveRequest {
    document: serde_json::Value,
    query: String,
    #[serde(default)]
    query_id: Option<String>,
    k: usize,
    /// A previous `/parse` result; computed on the fly when absent.
    #[serde(default)]
    parsed: Option<ParsedDocument>,
    #[serde(flatten)]
    options: ScoringOptions,
}

async fn retrieve_tables(State(app): State<Shared>, body: Bytes) -> Result<Response, ServiceError> {
    let req: RetrieveRequest = json_body(&body)?;
    let doc = document_from(&req.document)?;
    let (cfg, backend) = req.options.resolve(app.cfg.default_endpoint.as_ref())?;
    let query = Query::new(req.query_id.unwrap_or_else(|| "q".into()), req.query);
    let k = req.k;
    let given = req.parsed;
    let ranking = blocking(move || {
        let parsed = match given {
            Some(p) => p,
            None => run_parse(&doc, &backend, &cfg)?,
        };
        Ok(match &backend {
            Backend::Heuristic => retrieve(&parsed, &doc, &query, k, &HeuristicScorer, &cfg)?,
            Backend::Remote(r) => retrieve(&parsed, &doc, &query, k, r, &cfg)?,
        })
    })
    .await?;
    Ok(ok(&ranking))
}

