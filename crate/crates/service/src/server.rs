//! The HTTP service.
//!
//! Requests touching a workflow are serialized per workflow name. Runs are
//! driven on their own threads; while a run is in flight its thread is the
//! only writer of the workflow, so edits are refused with 409 and reads
//! return the last persisted state. Everything else is re-derived from the
//! state store on demand, which is what lets the service be restarted at any
//! time: unfinished runs are picked up again at startup.

use std::collections::{HashMap, HashSet};
use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path as UrlPath, Query, Request, State};
use axum::http::header;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hyflow_core::engine::valid_name;
use hyflow_core::specfile::archive_workflow_name;
use hyflow_core::{Engine, EngineError, JobParams, RunOptions, RunOutcome, TableRow, WorkflowRun};
use serde::Deserialize;
use serde_json::{Map, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tracing::{error, info, warn};

use crate::api_doc;
use crate::error::ApiError;
use crate::wire::{Deleted, GraphFormat, JobAdded, RunAck, UploadReport};

/// Largest accepted upload.
const UPLOAD_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub host: String,
    /// 0 binds an ephemeral port; [`ServiceConfig::validate`] rejects it.
    pub port: u16,
    pub state_root: PathBuf,
    /// Interval between probes of running jobs.
    pub poll_period: Duration,
    /// Directory of a browser UI served at `/` and `/static/`.
    pub static_dir: Option<PathBuf>,
    /// Pick up runs that were in flight when the service last stopped.
    pub resume: bool,
}

impl ServiceConfig {
    pub const DEFAULT_HOST: &'static str = "127.0.0.1";
    pub const DEFAULT_PORT: u16 = 8000;

    pub fn new(state_root: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            host: Self::DEFAULT_HOST.to_string(),
            port: Self::DEFAULT_PORT,
            state_root: state_root.into(),
            poll_period: Duration::from_secs(1),
            static_dir: None,
            resume: true,
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}:{}", self.host, self.port)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.host.trim().is_empty() {
            return Err("host must not be empty".into());
        }
        if self.port == 0 {
            return Err("port must be in 1-65535".into());
        }
        Ok(())
    }
}

fn guard<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

struct AppState {
    engine: Engine,
    static_dir: Option<PathBuf>,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    /// Workflows with a run thread in this process.
    running: Mutex<HashSet<String>>,
    runs: Mutex<Vec<JoinHandle<()>>>,
    stopping: AtomicBool,
}

impl AppState {
    fn new(engine: Engine, static_dir: Option<PathBuf>) -> Self {
        AppState {
            engine,
            static_dir,
            locks: Mutex::default(),
            running: Mutex::default(),
            runs: Mutex::default(),
            stopping: AtomicBool::new(false),
        }
    }

    fn lock_for(&self, name: &str) -> Arc<tokio::sync::Mutex<()>> {
        guard(&self.locks).entry(name.to_string()).or_default().clone()
    }

    fn is_running(&self, name: &str) -> bool {
        guard(&self.running).contains(name)
    }

    /// Cancels run threads and waits for them. Their jobs keep running.
    fn stop_runs(&self) {
        self.stopping.store(true, Ordering::SeqCst);
        let runs = std::mem::take(&mut *guard(&self.runs));
        for run in runs {
            let _ = run.join();
        }
    }
}

type Shared = Arc<AppState>;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn checked_name(name: &str) -> Result<(), ApiError> {
    valid_name(name).map_err(ApiError::from)
}

fn refuse_if_running(state: &AppState, name: &str) -> Result<(), ApiError> {
    if state.is_running(name) {
        return Err(EngineError::ActiveRun(name.to_string()).into());
    }
    Ok(())
}

/// Hands `run` to a new run thread. The caller holds the workflow's lock.
fn start_run(state: &Shared, run: WorkflowRun, show: bool, parallel: Option<usize>) -> Result<Vec<String>, ApiError> {
    if state.stopping.load(Ordering::SeqCst) {
        return Err(ApiError::new(
            axum::http::StatusCode::SERVICE_UNAVAILABLE,
            "the service is shutting down",
        ));
    }
    let plan = run.document.graph.topological_order().map_err(EngineError::from)?;
    let name = run.name().to_string();
    if !guard(&state.running).insert(name.clone()) {
        return Err(EngineError::ActiveRun(name).into());
    }
    let shared = state.clone();
    let spawned = thread::Builder::new()
        .name(format!("run-{name}"))
        .spawn(move || drive_run(shared, run, show, parallel));
    match spawned {
        Ok(handle) => {
            let mut runs = guard(&state.runs);
            runs.retain(|h| !h.is_finished());
            runs.push(handle);
            Ok(plan)
        }
        Err(e) => {
            guard(&state.running).remove(&name);
            Err(ApiError::internal(format!("cannot start run thread: {e}")))
        }
    }
}

fn drive_run(state: Shared, mut run: WorkflowRun, show: bool, parallel: Option<usize>) {
    struct Release<'a>(&'a AppState, String);
    impl Drop for Release<'_> {
        fn drop(&mut self) {
            guard(&self.0.running).remove(&self.1);
        }
    }
    let name = run.name().to_string();
    let _release = Release(&state, name.clone());
    let mut engine = state.engine.clone();
    engine.settings_mut().show = show;
    let options = RunOptions::default().cancellable(&state.stopping);
    info!(workflow = %name, ?parallel, show, "run started");
    let result = match parallel {
        Some(n) => engine.run_parallel(&mut run, n, options),
        None => engine.run_topo(&mut run, options),
    };
    match result {
        Ok(report) => match report.outcome {
            RunOutcome::Completed => info!(workflow = %name, "run completed"),
            RunOutcome::Halted { failed, blocked } => {
                warn!(workflow = %name, ?failed, ?blocked, "run halted")
            }
            RunOutcome::Interrupted => info!(workflow = %name, "run interrupted; jobs keep running"),
            RunOutcome::DryRun => {}
        },
        Err(e) => error!(workflow = %name, error = %e, "run stopped"),
    }
}

/// Starts a run thread for every workflow whose run clock was started but
/// never stopped.
fn resume_unfinished(state: &Shared) {
    let names = match state.engine.list_workflows() {
        Ok(names) => names,
        Err(e) => {
            warn!(error = %e, "cannot list workflows to resume");
            return;
        }
    };
    for name in names {
        match state.engine.load(&name) {
            Ok(run) if run.document.clock.t0.is_some() && run.document.clock.t1.is_none() => {
                match start_run(state, run, false, None) {
                    Ok(_) => info!(workflow = %name, "resuming unfinished run"),
                    Err(e) => warn!(workflow = %name, error = %e.detail, "cannot resume run"),
                }
            }
            Ok(_) => {}
            Err(e) => warn!(workflow = %name, error = %e, "cannot load workflow"),
        }
    }
}

/// Loads a workflow, refreshing it from its logs unless a run thread owns it.
async fn current(state: &Shared, name: &str) -> Result<(WorkflowRun, bool), ApiError> {
    checked_name(name)?;
    let lock = state.lock_for(name);
    let _held = lock.lock().await;
    let running = state.is_running(name);
    let shared = state.clone();
    let name = name.to_string();
    let run = blocking(move || {
        let mut run = shared.engine.load(&name)?;
        if !running {
            shared.engine.refresh(&mut run)?;
        }
        Ok(run)
    })
    .await?;
    Ok((run, running))
}

/// JSON form of a workflow: the state-carrying document layout plus the
/// workflow name, whether this service is running it, and probe errors.
fn workflow_json(run: &WorkflowRun, running: bool) -> Result<Map<String, Value>, ApiError> {
    let yaml = run.document.serialize(true)?;
    let mut root: Value = serde_yaml::from_str(&yaml).map_err(|e| ApiError::internal(e.to_string()))?;
    let Some(Value::Object(body)) = root.get_mut("workflow").map(Value::take) else {
        return Err(ApiError::internal("serialized workflow has no `workflow` mapping"));
    };
    let mut out = Map::new();
    out.insert("name".into(), run.name().into());
    out.insert("running".into(), running.into());
    out.extend(body);
    out.insert(
        "errors".into(),
        serde_json::to_value(&run.errors).map_err(|e| ApiError::internal(e.to_string()))?,
    );
    Ok(out)
}

// --- handlers ---------------------------------------------------------------

async fn list_workflows(State(state): State<Shared>) -> Result<Json<Vec<String>>, ApiError> {
    let names = blocking(move || Ok(state.engine.list_workflows()?)).await?;
    Ok(Json(names))
}

#[derive(Debug, Default, Deserialize)]
struct UploadQuery {
    archive: Option<String>,
    name: Option<String>,
}

fn is_yaml(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("yaml") || e.eq_ignore_ascii_case("yml"))
}

/// The file name of an upload, reduced to a safe single path component.
fn upload_file_name(raw: Option<&str>) -> String {
    raw.and_then(|r| Path::new(r).file_name())
        .and_then(|n| n.to_str())
        .filter(|n| !n.starts_with('.'))
        .map(String::from)
        .unwrap_or_else(|| "upload.tar".to_string())
}

/// A server-local archive path: as given, or else relative to the store.
fn resolve_archive(state: &AppState, archive: &str) -> PathBuf {
    let path = PathBuf::from(archive);
    if path.is_absolute() || path.exists() {
        return path;
    }
    let in_store = state.engine.store().root().join(&path);
    if in_store.exists() {
        in_store
    } else {
        path
    }
}

async fn upload(
    State(state): State<Shared>,
    query: Result<Query<UploadQuery>, QueryRejection>,
    request: Request,
) -> Result<Json<UploadReport>, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::unprocessable(e.body_text()))?;
    let multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let staging = tempfile::tempdir().map_err(|e| ApiError::internal(e.to_string()))?;

    let (path, name) = if multipart {
        let mut form = Multipart::from_request(request, &state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let mut name = query.name;
        let mut saved = None;
        while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
            if field.name() == Some("name") && field.file_name().is_none() {
                name = Some(field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?);
                continue;
            }
            if saved.is_some() {
                return Err(ApiError::bad_request("upload exactly one file"));
            }
            let path = staging.path().join(upload_file_name(field.file_name()));
            let data = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
            std::fs::write(&path, &data).map_err(|e| ApiError::internal(e.to_string()))?;
            saved = Some(path);
        }
        let path = saved.ok_or_else(|| ApiError::bad_request("the multipart body carries no file"))?;
        (path, name)
    } else {
        let archive = query.archive.ok_or_else(|| {
            ApiError::bad_request("name a server-side archive with `archive=` or upload one as multipart field `file`")
        })?;
        (resolve_archive(&state, &archive), query.name)
    };

    let yaml = is_yaml(&path);
    let name = match name.filter(|n| !n.is_empty()) {
        Some(n) => n,
        None if yaml => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        None => archive_workflow_name(&path)?,
    };
    checked_name(&name)?;
    let lock = state.lock_for(&name);
    let _held = lock.lock().await;
    refuse_if_running(&state, &name)?;
    let report = blocking(move || {
        let _staging = staging;
        let (run, warnings) = if yaml {
            state.engine.add_workflow_file(&path, Some(&name))?
        } else {
            state.engine.add_workflow_archive(&path, Some(&name))?
        };
        info!(workflow = %run.name(), nodes = run.document.graph.len(), "workflow stored");
        Ok(UploadReport {
            name: run.name().to_string(),
            nodes: run.document.graph.len(),
            warnings: warnings
                .iter()
                .map(|w| format!("job `{}`: script `{}` not found", w.node, w.script))
                .collect(),
        })
    })
    .await?;
    Ok(Json(report))
}

#[derive(Debug, Default, Deserialize)]
struct JobQuery {
    job: Option<String>,
}

async fn get_workflow(
    State(state): State<Shared>,
    UrlPath(name): UrlPath<String>,
    Query(query): Query<JobQuery>,
) -> Result<Json<Value>, ApiError> {
    let (run, running) = current(&state, &name).await?;
    let mut body = workflow_json(&run, running)?;
    let Some(job) = query.job else {
        return Ok(Json(Value::Object(body)));
    };
    let record = body
        .get_mut("nodes")
        .and_then(|nodes| nodes.get_mut(&job))
        .map(Value::take)
        .ok_or_else(|| ApiError::from(EngineError::NotFound(format!("job `{job}`"))))?;
    Ok(Json(record))
}

async fn delete_workflow(
    State(state): State<Shared>,
    UrlPath(name): UrlPath<String>,
    Query(query): Query<JobQuery>,
) -> Result<Json<Deleted>, ApiError> {
    checked_name(&name)?;
    let lock = state.lock_for(&name);
    let _held = lock.lock().await;
    refuse_if_running(&state, &name)?;
    let deleted = blocking(move || {
        match &query.job {
            Some(job) => {
                let mut run = state.engine.load(&name)?;
                state.engine.refresh(&mut run)?;
                state.engine.remove_job(&mut run, job)?;
                info!(workflow = %name, job = %job, "job deleted");
            }
            None => {
                state.engine.remove_workflow(&name)?;
                info!(workflow = %name, "workflow deleted");
            }
        }
        Ok(Deleted { name, job: query.job })
    })
    .await?;
    Ok(Json(deleted))
}

async fn add_job(
    State(state): State<Shared>,
    UrlPath(name): UrlPath<String>,
    params: Result<Json<JobParams>, JsonRejection>,
) -> Result<Json<JobAdded>, ApiError> {
    checked_name(&name)?;
    let Json(params) = params.map_err(|e| ApiError::unprocessable(e.body_text()))?;
    let lock = state.lock_for(&name);
    let _held = lock.lock().await;
    refuse_if_running(&state, &name)?;
    let added = blocking(move || {
        // Like the command line, adding a job creates the workflow.
        let created = !state.engine.store().exists(&name);
        let mut run = state.engine.open_or_create(&name)?;
        let job = params.name.clone();
        if let Err(e) = state.engine.add_job(&mut run, params) {
            if created {
                let _ = state.engine.remove_workflow(&name);
            }
            return Err(e.into());
        }
        let status = run.node(&job)?.status.to_string();
        Ok(JobAdded { name, job, status })
    })
    .await?;
    Ok(Json(added))
}

#[derive(Debug, Default, Deserialize)]
struct RunQuery {
    show: Option<String>,
    parallel: Option<usize>,
}

fn parse_flag(name: &str, value: Option<&str>) -> Result<bool, ApiError> {
    match value.map(str::to_ascii_lowercase).as_deref() {
        None | Some("") => Ok(false),
        Some("true" | "1" | "yes" | "on") => Ok(true),
        Some("false" | "0" | "no" | "off") => Ok(false),
        Some(other) => Err(ApiError::unprocessable(format!("`{name}` must be a boolean, not `{other}`"))),
    }
}

async fn run_workflow(
    State(state): State<Shared>,
    UrlPath(name): UrlPath<String>,
    query: Result<Query<RunQuery>, QueryRejection>,
) -> Result<Json<RunAck>, ApiError> {
    checked_name(&name)?;
    let Query(query) = query.map_err(|e| ApiError::unprocessable(e.body_text()))?;
    let show = parse_flag("show", query.show.as_deref())?;
    if query.parallel == Some(0) {
        return Err(ApiError::unprocessable("`parallel` must be at least 1"));
    }
    let lock = state.lock_for(&name);
    let _held = lock.lock().await;
    refuse_if_running(&state, &name)?;
    let shared = state.clone();
    let load_name = name.clone();
    let run = blocking(move || Ok(shared.engine.load(&load_name)?)).await?;
    let plan = start_run(&state, run, show, query.parallel)?;
    Ok(Json(RunAck {
        name,
        plan,
        show,
        parallel: query.parallel,
    }))
}

#[derive(Debug, Default, Deserialize)]
struct GraphQuery {
    format: Option<GraphFormat>,
}

async fn graph(
    State(state): State<Shared>,
    UrlPath(name): UrlPath<String>,
    query: Result<Query<GraphQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::unprocessable(e.body_text()))?;
    let (run, _) = current(&state, &name).await?;
    let format = query.format.unwrap_or_default();
    let text = blocking(move || match format {
        GraphFormat::Svg => Ok(state.engine.svg(&run)?),
        GraphFormat::Dot => Ok(state.engine.dot(&run)),
    })
    .await?;
    let content_type = match format {
        GraphFormat::Svg => "image/svg+xml",
        GraphFormat::Dot => "text/vnd.graphviz; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], text).into_response())
}

async fn table(State(state): State<Shared>, UrlPath(name): UrlPath<String>) -> Result<Json<Vec<TableRow>>, ApiError> {
    let (run, _) = current(&state, &name).await?;
    Ok(Json(state.engine.table_rows(&run)))
}

async fn openapi() -> Json<Value> {
    Json(api_doc::openapi())
}

async fn docs() -> Html<&'static str> {
    Html(api_doc::DOCS_HTML)
}

async fn index(State(state): State<Shared>) -> Html<String> {
    let installed = state
        .static_dir
        .as_ref()
        .and_then(|dir| std::fs::read_to_string(dir.join("index.html")).ok());
    Html(installed.unwrap_or_else(|| api_doc::INDEX_HTML.to_string()))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" | "htm" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(state): State<Shared>, UrlPath(path): UrlPath<String>) -> Result<Response, ApiError> {
    let missing = || ApiError::not_found(format!("`{path}` not found"));
    let dir = state.static_dir.as_ref().ok_or_else(missing)?;
    let relative = Path::new(&path);
    if !relative.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(missing());
    }
    let full = dir.join(relative);
    let bytes = std::fs::read(&full).map_err(|_| missing())?;
    Ok(([(header::CONTENT_TYPE, content_type(&full))], bytes).into_response())
}

async fn no_route() -> ApiError {
    ApiError::not_found("no such endpoint")
}

fn app(state: Shared) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/static/{*path}", get(static_file))
        .route("/docs", get(docs))
        .route("/openapi.json", get(openapi))
        .route("/workflows", get(list_workflows))
        .route("/workflow", post(upload))
        .route("/workflow/{name}", get(get_workflow).delete(delete_workflow))
        .route("/workflow/{name}/job", post(add_job))
        .route("/workflow/{name}/graph", get(graph))
        .route("/workflow/{name}/table", get(table))
        .route("/workflow/run/{name}", get(run_workflow))
        .fallback(no_route)
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .with_state(state)
}

/// A bound, not yet serving, service.
pub struct Service {
    listener: TcpListener,
    state: Shared,
}

impl Service {
    /// Binds the configured address over an engine on `config.state_root`.
    pub async fn bind(config: &ServiceConfig) -> io::Result<Service> {
        let mut engine = Engine::open(&config.state_root);
        engine.settings_mut().poll_period = config.poll_period;
        Self::bind_engine(config, engine).await
    }

    /// Binds the configured address over `engine`; `config.state_root` and
    /// `config.poll_period` are not consulted.
    pub async fn bind_engine(config: &ServiceConfig, engine: Engine) -> io::Result<Service> {
        let listener = TcpListener::bind((config.host.as_str(), config.port)).await?;
        let state = Arc::new(AppState::new(engine, config.static_dir.clone()));
        if config.resume {
            let shared = state.clone();
            tokio::task::spawn_blocking(move || resume_unfinished(&shared))
                .await
                .map_err(io::Error::other)?;
        }
        Ok(Service { listener, state })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` resolves, then cancels run threads. Jobs they
    /// launched keep running and are picked up by the next start.
    pub async fn run_until<F>(self, shutdown: F) -> io::Result<()>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        let state = self.state.clone();
        let served = axum::serve(self.listener, app(self.state))
            .with_graceful_shutdown(shutdown)
            .await;
        tokio::task::spawn_blocking(move || state.stop_runs())
            .await
            .map_err(io::Error::other)?;
        served
    }
}

async fn termination() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut signal) => {
                signal.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {},
        _ = terminate => {},
    }
}

/// Serves in the calling thread until interrupted or terminated.
pub fn run_foreground(config: &ServiceConfig) -> io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let service = Service::bind(config).await?;
        info!(address = %service.local_addr()?, root = %config.state_root.display(), "service listening");
        service.run_until(termination()).await?;
        info!("service stopped");
        Ok(())
    })
}

/// A service running on a background thread of the current process.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<io::Result<()>>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops serving and waits for run threads to wind down.
    pub fn stop(mut self) -> io::Result<()> {
        self.shutdown_and_join()
    }

    fn shutdown_and_join(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(thread) => thread.join().map_err(|_| io::Error::other("service thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_and_join();
    }
}

/// Starts the service on a background thread and returns once it accepts
/// connections.
pub fn spawn(config: ServiceConfig) -> io::Result<ServiceHandle> {
    spawn_with(config, None)
}

/// Like [`spawn`], over a preconfigured engine.
pub fn spawn_engine(config: ServiceConfig, engine: Engine) -> io::Result<ServiceHandle> {
    spawn_with(config, Some(engine))
}

fn spawn_with(config: ServiceConfig, engine: Option<Engine>) -> io::Result<ServiceHandle> {
    let (ready_tx, ready_rx) = std::sync::mpsc::channel::<io::Result<SocketAddr>>();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let thread = thread::Builder::new().name("hyflow-service".into()).spawn(move || {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        runtime.block_on(async move {
            let bound = match engine {
                Some(engine) => Service::bind_engine(&config, engine).await,
                None => Service::bind(&config).await,
            };
            let service = match bound.and_then(|s| s.local_addr().map(|a| (s, a))) {
                Ok((service, addr)) => {
                    let _ = ready_tx.send(Ok(addr));
                    service
                }
                Err(e) => {
                    let _ = ready_tx.send(Err(e));
                    return Ok(());
                }
            };
            service
                .run_until(async {
                    let _ = stop_rx.await;
                })
                .await
        })
    })?;
    let addr = ready_rx
        .recv()
        .map_err(|_| io::Error::other("service thread exited before binding"))??;
    Ok(ServiceHandle {
        addr,
        shutdown: Some(stop_tx),
        thread: Some(thread),
    })
}
