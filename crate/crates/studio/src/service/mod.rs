//! Local HTTP service for browsing datasets, training and rendering.
//!
//! Everything lives under a data root:
//!
//! ```text
//! projects/{id}/project.json
//! projects/{id}/dataset/          ingested frames
//! projects/{id}/model.chad
//! projects/{id}/jobs/{jid}.json
//! projects/{id}/renders/{jid}/{final,gan}/
//! projects/{id}/uploads/          uploaded keyframe images
//! ```
//!
//! Long-running work is submitted as a job and answered with its id at
//! once; clients poll the job for progress.

mod jobs;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{json, Value};

pub use jobs::{JobError, JobHandle, JobKind, JobRecord, JobState, Transition};

use crate::dataset::{load_frame, read_json, write_json, DatasetManifest};
use crate::error::{Error, Result};
use crate::image_io::{frame_from_image, png_bytes, read_frame, write_frame};
use crate::ops;
use crate::spec::{BlendSpec, IngestSpec, InterpolateSpec, TrainGanSpec, TrainManifoldSpec};

pub const THUMBNAIL_SIDE: u32 = 128;
const UPLOAD_LIMIT: usize = 32 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_root: PathBuf,
    pub port: u16,
}

impl ServiceConfig {
    /// Reads `CHAD_DATA_ROOT` (default `./chad-data`), `CHAD_PORT` (default
    /// 8787) and `CHAD_DEVICE`, which must be unset or `cpu`.
    pub fn from_env() -> Result<Self> {
        if let Ok(d) = std::env::var("CHAD_DEVICE") {
            if !d.eq_ignore_ascii_case("cpu") {
                return Err(Error::Unavailable(format!("device {d:?}: only cpu is supported")));
            }
        }
        let port = match std::env::var("CHAD_PORT") {
            Ok(p) => p
                .parse()
                .map_err(|_| Error::format("CHAD_PORT", format!("{p:?} is not a port number")))?,
            Err(_) => 8787,
        };
        Ok(ServiceConfig {
            data_root: std::env::var_os("CHAD_DATA_ROOT").map_or_else(|| "chad-data".into(), PathBuf::from),
            port,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub zdim: usize,
    pub generator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectMeta {
    pub id: String,
    pub name: String,
    pub created: f64,
    pub dataset: Option<DatasetManifest>,
    pub model: Option<ModelInfo>,
}

pub struct Project {
    meta: RwLock<ProjectMeta>,
    dir: PathBuf,
    jobs: RwLock<BTreeMap<u64, Arc<JobHandle>>>,
    next_job: AtomicU64,
    next_upload: AtomicU64,
    /// Exclusive jobs hold the write side, renders the read side.
    files: tokio::sync::RwLock<()>,
}

impl Project {
    pub fn meta(&self) -> ProjectMeta {
        self.meta.read().clone()
    }

    fn dataset_dir(&self) -> PathBuf {
        self.dir.join("dataset")
    }

    fn model_path(&self) -> PathBuf {
        self.dir.join("model.chad")
    }

    fn render_dir(&self, job: &str) -> PathBuf {
        self.dir.join("renders").join(job)
    }

    fn save_meta(&self) -> Result<()> {
        write_json(&self.dir.join("project.json"), &*self.meta.read())
    }

    fn job(&self, id: &str) -> Option<Arc<JobHandle>> {
        let n = id.strip_prefix('j')?.parse().ok()?;
        self.jobs.read().get(&n).cloned()
    }

    fn load(dir: PathBuf) -> Result<Project> {
        let meta: ProjectMeta = read_json(&dir.join("project.json"))?;
        let mut jobs = BTreeMap::new();
        if let Ok(entries) = fs::read_dir(dir.join("jobs")) {
            for path in entries.filter_map(|e| e.ok().map(|e| e.path())) {
                if path.extension().is_none_or(|e| e != "json") {
                    continue;
                }
                let record: JobRecord = read_json(&path)?;
                let Some(n) = record.id.strip_prefix('j').and_then(|n| n.parse::<u64>().ok()) else {
                    continue;
                };
                let interrupted = !record.state.is_terminal();
                let handle = JobHandle::restore(record, path);
                if interrupted {
                    handle.transition(JobState::Failed, |r| {
                        r.error = Some(JobError {
                            error: "unavailable".into(),
                            message: "the service stopped before the job finished".into(),
                        })
                    })?;
                }
                jobs.insert(n, Arc::new(handle));
            }
        }
        let next_job = jobs.keys().next_back().map_or(1, |n| n + 1);
        let uploads = fs::read_dir(dir.join("uploads")).map_or(0, |d| d.count() as u64);
        Ok(Project {
            meta: RwLock::new(meta),
            dir,
            jobs: RwLock::new(jobs),
            next_job: AtomicU64::new(next_job),
            next_upload: AtomicU64::new(uploads + 1),
            files: tokio::sync::RwLock::new(()),
        })
    }
}

pub struct AppState {
    root: PathBuf,
    projects: RwLock<BTreeMap<u64, Arc<Project>>>,
    next_project: AtomicU64,
}

fn numeric_id(id: &str, prefix: char) -> Option<u64> {
    id.strip_prefix(prefix)?.parse().ok()
}

impl AppState {
    /// Opens `data_root`, reloading projects and jobs left by earlier runs.
    /// Jobs that were still queued or running are marked failed.
    pub fn open(data_root: &Path) -> Result<Arc<AppState>> {
        let root = data_root.join("projects");
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut projects = BTreeMap::new();
        for entry in fs::read_dir(&root).map_err(|e| Error::io(&root, e))? {
            let dir = entry.map_err(|e| Error::io(&root, e))?.path();
            let Some(n) = dir.file_name().and_then(|n| n.to_str()).and_then(|n| numeric_id(n, 'p')) else {
                continue;
            };
            if dir.join("project.json").is_file() {
                projects.insert(n, Arc::new(Project::load(dir)?));
            }
        }
        let next = projects.keys().next_back().map_or(1, |n| n + 1);
        Ok(Arc::new(AppState {
            root,
            projects: RwLock::new(projects),
            next_project: AtomicU64::new(next),
        }))
    }

    pub fn project(&self, id: &str) -> Option<Arc<Project>> {
        self.projects.read().get(&numeric_id(id, 'p')?).cloned()
    }

    fn create_project(&self, name: String) -> Result<Arc<Project>> {
        let n = self.next_project.fetch_add(1, Ordering::SeqCst);
        let id = format!("p{n}");
        let dir = self.root.join(&id);
        fs::create_dir_all(dir.join("jobs")).map_err(|e| Error::io(&dir, e))?;
        let project = Arc::new(Project {
            meta: RwLock::new(ProjectMeta {
                id,
                name,
                created: jobs::now(),
                dataset: None,
                model: None,
            }),
            dir,
            jobs: RwLock::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            next_upload: AtomicU64::new(1),
            files: tokio::sync::RwLock::new(()),
        });
        project.save_meta()?;
        self.projects.write().insert(n, project.clone());
        Ok(project)
    }
}

/// A JSON error body with an HTTP status.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind: kind.into(),
            message: message.into(),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not-found", what)
    }

    fn conflict(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, "unavailable", message)
    }

    fn validation(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Unavailable(_) => StatusCode::CONFLICT,
            Error::Format { .. } => StatusCode::BAD_REQUEST,
            Error::Core(chad_core::Error::Training { .. }) => StatusCode::INTERNAL_SERVER_ERROR,
            Error::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.kind(), e.to_string())
    }
}

impl From<chad_core::Error> for ApiError {
    fn from(e: chad_core::Error) -> Self {
        Error::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.kind, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Parses a request body, mapping every failure to a 400 JSON error.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "format", e.to_string()))
}

fn parse_config<T: DeserializeOwned>(raw: &RawValue) -> ApiResult<T> {
    serde_json::from_str(raw.get()).map_err(|e| ApiError::validation(format!("config: {e}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/frames/{index}", get(get_frame))
        .route("/projects/{id}/uploads", post(upload_image))
        .route("/projects/{id}/jobs", get(list_jobs).post(submit_job))
        .route("/projects/{id}/jobs/{job}", get(get_job))
        .route("/projects/{id}/render/{job}/{frame}", get(get_render))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .with_state(state)
}

/// Binds `127.0.0.1:{port}` and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let state = AppState::open(&config.data_root)?;
    let addr = std::net::SocketAddr::from(([127, 0, 0, 1], config.port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(format!("127.0.0.1:{}", config.port), e))?;
    tracing::info!(%addr, root = %config.data_root.display(), "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "device": "cpu" }))
}

fn project_or_404(state: &AppState, id: &str) -> ApiResult<Arc<Project>> {
    state.project(id).ok_or_else(|| ApiError::not_found(format!("project {id}")))
}

async fn list_projects(State(state): State<Arc<AppState>>) -> Json<Vec<ProjectMeta>> {
    Json(state.projects.read().values().map(|p| p.meta()).collect())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateProject {
    name: String,
    /// Ingest settings; when present an ingest job starts right away.
    #[serde(default)]
    ingest: Option<Box<RawValue>>,
}

async fn create_project(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: CreateProject = parse_body(&body)?;
    if req.name.trim().is_empty() {
        return Err(ApiError::validation("name must not be empty"));
    }
    if let Some(raw) = &req.ingest {
        parse_config::<IngestSpec>(raw)?.source()?;
    }
    let project = state.create_project(req.name)?;
    let job = match req.ingest {
        Some(raw) => Some(submit(&project, JobKind::Ingest, raw)?),
        None => None,
    };
    Ok((StatusCode::CREATED, Json(json!({ "project": project.meta(), "job": job }))).into_response())
}

async fn get_project(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<ProjectMeta>> {
    Ok(Json(project_or_404(&state, &id)?.meta()))
}

#[derive(Deserialize)]
struct FrameQuery {
    size: Option<u32>,
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn get_frame(
    State(state): State<Arc<AppState>>,
    UrlPath((id, index)): UrlPath<(String, usize)>,
    Query(q): Query<FrameQuery>,
) -> ApiResult<Response> {
    let project = project_or_404(&state, &id)?;
    let manifest = project
        .meta()
        .dataset
        .ok_or_else(|| ApiError::conflict("the project has no dataset yet"))?;
    let side = q.size.unwrap_or(THUMBNAIL_SIDE).clamp(1, THUMBNAIL_SIDE);
    let dir = project.dataset_dir();
    let bytes = tokio::task::spawn_blocking(move || png_bytes(&load_frame(&dir, &manifest, index)?, Some(side)))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(png_response(bytes))
}

/// Stores an image keyframe. The image must already have the dataset's
/// resolution; the response names the path to use in an interpolate job.
async fn upload_image(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let project = project_or_404(&state, &id)?;
    let manifest = project
        .meta()
        .dataset
        .ok_or_else(|| ApiError::conflict("the project has no dataset yet"))?;
    let img = image::load_from_memory(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "image", e.to_string()))?;
    let frame = frame_from_image(&img, manifest.channels)?;
    if (frame.width(), frame.height()) != (manifest.width, manifest.height) {
        return Err(ApiError::validation(format!(
            "image is {}x{}; the dataset is {}x{}",
            frame.width(),
            frame.height(),
            manifest.width,
            manifest.height
        )));
    }
    let n = project.next_upload.fetch_add(1, Ordering::SeqCst);
    let rel = format!("uploads/u{n}.png");
    let path = project.dir.join(&rel);
    fs::create_dir_all(project.dir.join("uploads")).map_err(|e| Error::io(&path, e))?;
    write_frame(&path, &frame)?;
    Ok(Json(json!({ "path": rel })))
}

async fn list_jobs(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Vec<Arc<JobRecord>>>> {
    let project = project_or_404(&state, &id)?;
    let jobs = project.jobs.read().values().map(|j| j.snapshot()).collect();
    Ok(Json(jobs))
}

async fn get_job(State(state): State<Arc<AppState>>, UrlPath((id, job)): UrlPath<(String, String)>) -> ApiResult<Json<Arc<JobRecord>>> {
    let project = project_or_404(&state, &id)?;
    let handle = project.job(&job).ok_or_else(|| ApiError::not_found(format!("job {job}")))?;
    Ok(Json(handle.snapshot()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitJob {
    kind: JobKind,
    #[serde(default)]
    config: Option<Box<RawValue>>,
}

/// Settings of a denoise job: the render job whose generator frames to
/// denoise, and the blend parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseJobSpec {
    pub job: String,
    #[serde(default)]
    pub blend: BlendSpec,
}

/// A relative path that stays inside the project directory.
fn contained(path: &Path) -> bool {
    !path.as_os_str().is_empty() && path.components().all(|c| matches!(c, Component::Normal(_)))
}

fn check_submission(project: &Project, kind: JobKind, raw: &RawValue) -> ApiResult<()> {
    let meta = project.meta();
    let need_dataset = || {
        meta.dataset
            .clone()
            .ok_or_else(|| ApiError::conflict("the project has no dataset yet"))
    };
    let need_model = |generator: bool| match &meta.model {
        Some(m) if m.generator || !generator => Ok(()),
        Some(_) => Err(ApiError::conflict("the model has no generator yet")),
        None => Err(ApiError::conflict("the project has no trained model yet")),
    };
    match kind {
        JobKind::Ingest => {
            parse_config::<IngestSpec>(raw)?.source()?;
        }
        JobKind::TrainManifold => {
            parse_config::<TrainManifoldSpec>(raw)?;
            need_dataset()?;
        }
        JobKind::TrainGan => {
            parse_config::<TrainGanSpec>(raw)?;
            need_model(false)?;
        }
        JobKind::Interpolate => {
            let spec: InterpolateSpec = parse_config(raw)?;
            spec.validate()?;
            let dataset = need_dataset()?;
            need_model(false)?;
            for (i, k) in spec.keyframes.iter().enumerate() {
                if let Some(idx) = k.index.filter(|&idx| idx >= dataset.frames) {
                    return Err(ApiError::validation(format!(
                        "keyframe {i}: frame {idx} is outside the dataset of {} frames",
                        dataset.frames
                    )));
                }
                if let Some(p) = k.image.as_deref().filter(|p| !contained(p)) {
                    return Err(ApiError::validation(format!("keyframe {i}: {} is not a project path", p.display())));
                }
            }
        }
        JobKind::Denoise => {
            let spec: DenoiseJobSpec = parse_config(raw)?;
            spec.blend.params().validate()?;
            need_model(false)?;
            let source = project
                .job(&spec.job)
                .ok_or_else(|| ApiError::not_found(format!("job {}", spec.job)))?
                .snapshot();
            if source.kind != JobKind::Interpolate || source.state != JobState::Done {
                return Err(ApiError::conflict(format!("job {} is not a finished interpolate job", spec.job)));
            }
        }
    }
    Ok(())
}

async fn submit_job(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Response> {
    let project = project_or_404(&state, &id)?;
    let req: SubmitJob = parse_body(&body)?;
    let raw = match req.config {
        Some(raw) => raw,
        None => RawValue::from_string("{}".into()).expect("valid JSON"),
    };
    check_submission(&project, req.kind, &raw)?;
    let record = submit(&project, req.kind, raw)?;
    Ok((StatusCode::ACCEPTED, Json(record)).into_response())
}

/// Registers a job and starts it in the background.
fn submit(project: &Arc<Project>, kind: JobKind, config: Box<RawValue>) -> Result<Arc<JobRecord>> {
    let n = project.next_job.fetch_add(1, Ordering::SeqCst);
    let id = format!("j{n}");
    let path = project.dir.join("jobs").join(format!("{id}.json"));
    let handle = Arc::new(JobHandle::create(id, project.meta().id, kind, config, path)?);
    project.jobs.write().insert(n, handle.clone());
    let record = handle.snapshot();
    tokio::spawn(run_job(project.clone(), handle));
    Ok(record)
}

async fn run_job(project: Arc<Project>, handle: Arc<JobHandle>) {
    let kind = handle.snapshot().kind;
    let _exclusive;
    let _shared;
    if kind.is_exclusive() {
        _exclusive = project.files.write().await;
    } else {
        _shared = project.files.read().await;
    }
    if let Err(e) = handle.transition(JobState::Running, |_| {}) {
        tracing::error!("{e}");
        return;
    }
    let (p, h) = (project.clone(), handle.clone());
    let outcome = tokio::task::spawn_blocking(move || execute(&p, &h))
        .await
        .unwrap_or_else(|e| Err(Error::Unavailable(format!("the job panicked: {e}"))));
    let result = match outcome {
        Ok(value) => handle.transition(JobState::Done, |r| {
            r.progress = 1.0;
            r.result = Some(value);
        }),
        Err(e) => {
            tracing::warn!(job = %handle.snapshot().id, "job failed: {e}");
            handle.transition(JobState::Failed, |r| r.error = Some(JobError::from(&e)))
        }
    };
    if let Err(e) = result {
        tracing::error!("{e}");
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::format("json", e.to_string()))
}

fn config<T: DeserializeOwned>(record: &JobRecord) -> Result<T> {
    serde_json::from_str(record.config.get()).map_err(|e| Error::format("job config", e.to_string()))
}

/// Runs a job to completion on the current (blocking) thread.
fn execute(project: &Project, handle: &JobHandle) -> Result<Value> {
    let record = handle.snapshot();
    let mut progress = |f: f64| handle.set_progress(f);
    let dataset = project.dataset_dir();
    let model = project.model_path();
    match record.kind {
        JobKind::Ingest => {
            let spec: IngestSpec = config(&record)?;
            if dataset.exists() {
                fs::remove_dir_all(&dataset).map_err(|e| Error::io(&dataset, e))?;
            }
            let manifest = ops::ingest(&spec, &dataset)?;
            let mut meta = project.meta.write();
            meta.dataset = Some(manifest.clone());
            meta.model = None;
            drop(meta);
            let _ = fs::remove_file(&model);
            project.save_meta()?;
            to_value(&manifest)
        }
        JobKind::TrainManifold => {
            let spec: TrainManifoldSpec = config(&record)?;
            let summary = ops::train_manifold_op(&dataset, &spec, &model, &mut progress)?;
            project.meta.write().model = Some(ModelInfo {
                zdim: spec.zdim,
                generator: false,
            });
            project.save_meta()?;
            to_value(&summary)
        }
        JobKind::TrainGan => {
            let spec: TrainGanSpec = config(&record)?;
            let report = ops::train_gan_op(Some(&dataset), &model, &spec, &model, &mut progress)?;
            if let Some(m) = project.meta.write().model.as_mut() {
                m.generator = true;
            }
            project.save_meta()?;
            to_value(&report)
        }
        JobKind::Interpolate => {
            let spec: InterpolateSpec = config(&record)?;
            let out = project.render_dir(&record.id);
            let summary = ops::interpolate_op(Some(&dataset), &model, &spec, &project.dir, &out, &mut progress)?;
            to_value(&summary)
        }
        JobKind::Denoise => {
            let spec: DenoiseJobSpec = config(&record)?;
            let frames = project.render_dir(&spec.job).join("gan");
            let out = project.render_dir(&record.id).join("final");
            let summary = ops::denoise_op(Some(&dataset), &model, &frames, &spec.blend, &out, &mut progress)?;
            to_value(&summary)
        }
    }
}

#[derive(Deserialize)]
struct RenderQuery {
    #[serde(default)]
    stage: RenderStage,
}

#[derive(Deserialize, Default, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RenderStage {
    Gan,
    #[default]
    Final,
}

async fn get_render(
    State(state): State<Arc<AppState>>,
    UrlPath((id, job, frame)): UrlPath<(String, String, usize)>,
    Query(q): Query<RenderQuery>,
) -> ApiResult<Response> {
    let project = project_or_404(&state, &id)?;
    let record = project
        .job(&job)
        .ok_or_else(|| ApiError::not_found(format!("job {job}")))?
        .snapshot();
    if !matches!(record.kind, JobKind::Interpolate | JobKind::Denoise) {
        return Err(ApiError::not_found(format!("job {job} renders no frames")));
    }
    if record.state != JobState::Done {
        return Err(ApiError::conflict(format!("job {job} is {:?}", record.state).to_lowercase()));
    }
    let stage = match q.stage {
        RenderStage::Gan => "gan",
        RenderStage::Final => "final",
    };
    let path = project.render_dir(&job).join(stage).join(crate::dataset::frame_file_name(frame));
    if !path.is_file() {
        return Err(ApiError::not_found(format!("frame {frame} of job {job} ({stage})")));
    }
    let channels = project.meta().dataset.map_or(3, |d| d.channels);
    let bytes = tokio::task::spawn_blocking(move || png_bytes(&read_frame(&path, channels)?, None))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(png_response(bytes))
}
