//! HTTP session service: create a session from an image and a model, place
//! a contour, then step or run the evolution while polling its state.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use flowsnake::flowengine::{
    estimate_means, BaselinePredictor, CnnPredictor, Evolution, EvolutionConfig, FlowField, FlowPredictor,
    OracleSdmPredictor, Termination,
};
use flowsnake::geometry::{rasterize, signed_distance_map, BinaryMask, Curve, CurveJson, Point2};
use flowsnake::io::{decode_image, encode_mask_png, mask_from_image};
use flowsnake::{Error, Image32};
use serde::{Deserialize, Serialize};

use crate::models::{list_models, ModelCache};

/// Smallest contour accepted by `PUT /sessions/{id}/contour`.
pub const MIN_CONTOUR_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Idle,
    Running,
    Converged,
    Error,
}

/// Pseudo-model names that need no weight file.
pub const ORACLE_MODEL: &str = "oracle";
pub const BASELINE_MODEL: &str = "baseline";

pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    models: ModelCache,
    models_dir: PathBuf,
    counter: AtomicU64,
}

impl AppState {
    pub fn new(models_dir: impl Into<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            sessions: RwLock::default(),
            models: ModelCache::default(),
            models_dir: models_dir.into(),
            counter: AtomicU64::new(0),
        })
    }

    pub fn cached_models(&self) -> usize {
        self.models.len()
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id}")))
    }
}

struct Session {
    id: String,
    model: String,
    image: Arc<Image32>,
    predictor: Arc<dyn FlowPredictor<f32>>,
    cancel: Arc<AtomicBool>,
    inner: Mutex<Inner>,
}

/// Guarded session state. Locks are held only to read or publish; the
/// evolution is moved out while a worker advances it.
struct Inner {
    config: EvolutionConfig,
    status: Status,
    busy: bool,
    evolution: Option<Evolution<f32>>,
    view: View,
    error: Option<String>,
}

/// Latest published snapshot, readable while a worker holds the evolution.
#[derive(Clone, Default)]
struct View {
    curve: Option<Vec<[f64; 2]>>,
    iteration: usize,
    displacement: Option<f64>,
    termination: Option<Termination>,
}

fn pairs(points: &[Point2<f32>]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.x as f64, p.y as f64]).collect()
}

fn flow_pairs(f: &FlowField<f32>) -> Vec<[f64; 2]> {
    pairs(f.vectors())
}

impl View {
    fn of(ev: &Evolution<f32>) -> Self {
        Self {
            curve: Some(pairs(ev.curve().vertices())),
            iteration: ev.iteration(),
            displacement: ev.trace().steps.last().map(|s| s.displacement),
            termination: ev.termination(),
        }
    }
}

fn status_after(ev: &Evolution<f32>) -> Status {
    match ev.termination() {
        Some(Termination::Converged) => Status::Converged,
        Some(Termination::Collapsed) => Status::Error,
        _ => Status::Idle,
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn busy() -> Self {
        Self::new(StatusCode::CONFLICT, "session is running")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/models", get(models))
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_state).delete(delete_session))
        .route("/sessions/:id/state", get(get_state))
        .route("/sessions/:id/contour", put(set_contour))
        .route("/sessions/:id/step", post(step))
        .route("/sessions/:id/run", post(run))
        .route("/sessions/:id/stop", post(stop))
        .route("/sessions/:id/mask", get(mask))
        .route("/sessions/:id/trace", get(trace))
        .with_state(state)
}

pub async fn serve(host: &str, port: u16, models_dir: PathBuf) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(models_dir))).await?;
    Ok(())
}

async fn models(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "models": list_models(&app.models_dir),
        "builtin": [ORACLE_MODEL, BASELINE_MODEL],
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Base64-encoded PNG.
    pub image: String,
    /// A weight file in the models directory, `oracle` or `baseline`.
    pub model: String,
    /// Base64 PNG ground-truth mask (`oracle`, or `baseline` means).
    #[serde(default)]
    pub mask: Option<String>,
    #[serde(default)]
    pub mu_in: Option<f64>,
    #[serde(default)]
    pub mu_out: Option<f64>,
    #[serde(default)]
    pub config: Option<EvolutionConfig>,
    #[serde(default)]
    pub contour: Option<CurveJson>,
}

fn decode_b64_image(field: &str, text: &str) -> ApiResult<Image32> {
    let bytes = B64
        .decode(text.trim())
        .map_err(|e| ApiError::bad(format!("{field}: invalid base64: {e}")))?;
    decode_image(&bytes).map_err(|e| ApiError::bad(format!("{field}: undecodable image: {e}")))
}

/// Plain file names only; no directories or parent references.
fn model_file(dir: &Path, name: &str) -> Option<PathBuf> {
    let mut parts = Path::new(name).components();
    match (parts.next(), parts.next()) {
        (Some(Component::Normal(_)), None) => Some(dir.join(name)),
        _ => None,
    }
}

fn make_predictor(
    app: &AppState,
    req: &CreateSession,
    image: &Image32,
    mask: Option<&BinaryMask>,
) -> flowsnake::Result<Box<dyn FlowPredictor<f32>>> {
    let need_mask = || mask.ok_or_else(|| Error::InvalidConfig(format!("model {} needs a mask", req.model)));
    Ok(match req.model.as_str() {
        ORACLE_MODEL => Box::new(OracleSdmPredictor::new(signed_distance_map(need_mask()?)?)),
        BASELINE_MODEL => match (req.mu_in, req.mu_out) {
            (Some(i), Some(o)) => Box::new(BaselinePredictor::new(i as f32, o as f32)),
            _ => {
                let (i, o) = estimate_means(image, need_mask()?)?;
                Box::new(BaselinePredictor::new(i, o))
            }
        },
        name => {
            let path = model_file(&app.models_dir, name)
                .ok_or_else(|| Error::InvalidConfig(format!("bad model name {name:?}")))?;
            let net = app.models.get(&path)?;
            if net.in_channels() != image.channels() {
                return Err(Error::ChannelMismatch {
                    expected: net.in_channels(),
                    actual: image.channels(),
                });
            }
            Box::new(CnnPredictor::new(net))
        }
    })
}

#[derive(Serialize)]
struct Created {
    id: String,
    model: String,
    width: usize,
    height: usize,
    channels: usize,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let image = decode_b64_image("image", &req.image)?;
    let mask = match &req.mask {
        Some(m) => {
            let m = mask_from_image(&decode_b64_image("mask", m)?);
            if (m.width(), m.height()) != (image.width(), image.height()) {
                return Err(ApiError::bad("mask and image sizes differ"));
            }
            Some(m)
        }
        None => None,
    };
    let config = req.config.clone().unwrap_or_default();
    config.validate().map_err(|e| ApiError::bad(e.to_string()))?;
    let predictor = make_predictor(&app, &req, &image, mask.as_ref()).map_err(|e| ApiError::bad(e.to_string()))?;
    let evolution = match &req.contour {
        Some(c) => Some(new_evolution(c, &config)?),
        None => None,
    };
    let id = format!("s{:06}", app.counter.fetch_add(1, Ordering::Relaxed) + 1);
    let created = Created {
        id: id.clone(),
        model: req.model.clone(),
        width: image.width(),
        height: image.height(),
        channels: image.channels(),
    };
    let session = Session {
        id: id.clone(),
        model: req.model.clone(),
        image: Arc::new(image),
        predictor: Arc::from(predictor),
        cancel: Arc::new(AtomicBool::new(false)),
        inner: Mutex::new(Inner {
            view: evolution.as_ref().map(View::of).unwrap_or_default(),
            config,
            status: Status::Idle,
            busy: false,
            evolution,
            error: None,
        }),
    };
    app.sessions.write().unwrap().insert(id, Arc::new(session));
    Ok((StatusCode::CREATED, Json(created)))
}

fn new_evolution(c: &CurveJson, config: &EvolutionConfig) -> ApiResult<Evolution<f32>> {
    if c.vertices.len() < MIN_CONTOUR_POINTS {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("contour needs at least {MIN_CONTOUR_POINTS} points, got {}", c.vertices.len()),
        ));
    }
    let curve: Curve<f32> = c
        .to_curve()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Evolution::new(&curve, config.clone()).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}

#[derive(Serialize)]
pub struct StateReply {
    id: String,
    model: String,
    status: Status,
    iteration: usize,
    curve: Option<Vec<[f64; 2]>>,
    displacement: Option<f64>,
    termination: Option<Termination>,
    error: Option<String>,
    config: EvolutionConfig,
}

fn state_reply(s: &Session) -> StateReply {
    let inner = s.inner.lock().unwrap();
    StateReply {
        id: s.id.clone(),
        model: s.model.clone(),
        status: inner.status,
        iteration: inner.view.iteration,
        curve: inner.view.curve.clone(),
        displacement: inner.view.displacement,
        termination: inner.view.termination,
        error: inner.error.clone(),
        config: inner.config.clone(),
    }
}

async fn get_state(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<StateReply>> {
    let s = app.session(&id)?;
    Ok(Json(state_reply(&s)))
}

async fn delete_session(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<StatusCode> {
    let s = app
        .sessions
        .write()
        .unwrap()
        .remove(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id}")))?;
    s.cancel.store(true, Ordering::Relaxed);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourRequest {
    pub vertices: Vec<[f64; 2]>,
    #[serde(default = "closed")]
    pub closed: bool,
    /// Replaces the session's evolution settings when present.
    #[serde(default)]
    pub config: Option<EvolutionConfig>,
}

fn closed() -> bool {
    true
}

async fn set_contour(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<ContourRequest>,
) -> ApiResult<Json<StateReply>> {
    let s = app.session(&id)?;
    {
        let mut inner = s.inner.lock().unwrap();
        if inner.busy {
            return Err(ApiError::busy());
        }
        let config = req.config.clone().unwrap_or_else(|| inner.config.clone());
        config
            .validate()
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        let curve = CurveJson {
            vertices: req.vertices,
            closed: req.closed,
        };
        let ev = new_evolution(&curve, &config)?;
        inner.view = View::of(&ev);
        inner.status = status_after(&ev);
        inner.evolution = Some(ev);
        inner.config = config;
        inner.error = None;
    }
    Ok(Json(state_reply(&s)))
}

/// Moves the evolution out of the session and marks it running.
fn checkout(s: &Session) -> ApiResult<Evolution<f32>> {
    let mut inner = s.inner.lock().unwrap();
    if inner.busy {
        return Err(ApiError::busy());
    }
    let ev = inner
        .evolution
        .take()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no contour set"))?;
    inner.busy = true;
    inner.status = Status::Running;
    s.cancel.store(false, Ordering::Relaxed);
    Ok(ev)
}

fn checkin(s: &Session, ev: Evolution<f32>, error: Option<Error>) {
    let mut inner = s.inner.lock().unwrap();
    inner.view = View::of(&ev);
    inner.status = if error.is_some() { Status::Error } else { status_after(&ev) };
    inner.error = error.map(|e| e.to_string());
    inner.evolution = Some(ev);
    inner.busy = false;
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRequest {
    #[serde(default = "one")]
    pub iterations: usize,
}

fn one() -> usize {
    1
}

#[derive(Serialize)]
pub struct StepReply {
    status: Status,
    iteration: usize,
    /// Iterations performed by this call.
    performed: usize,
    curve: Vec<[f64; 2]>,
    raw_flow: Option<Vec<[f64; 2]>>,
    regularized_flow: Option<Vec<[f64; 2]>>,
    displacement: Option<f64>,
    termination: Option<Termination>,
    error: Option<String>,
}

async fn step(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<StepRequest>,
) -> ApiResult<Json<StepReply>> {
    let s = app.session(&id)?;
    let mut ev = checkout(&s)?;
    let worker = s.clone();
    let (ev, performed, error) = tokio::task::spawn_blocking(move || {
        let before = ev.iteration();
        let mut error = None;
        for _ in 0..req.iterations {
            match ev.step(&worker.image, &*worker.predictor) {
                Ok(Some(_)) => {}
                Ok(None) => break,
                Err(e) => {
                    error = Some(e);
                    break;
                }
            }
            if ev.is_finished() {
                break;
            }
        }
        let performed = ev.iteration() - before;
        (ev, performed, error)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let last = (performed > 0).then(|| ev.trace().steps.last()).flatten();
    let reply = StepReply {
        status: Status::Idle,
        iteration: ev.iteration(),
        performed,
        curve: pairs(ev.curve().vertices()),
        raw_flow: last.map(|r| flow_pairs(&r.raw_flow)),
        regularized_flow: last.map(|r| flow_pairs(&r.regularized_flow)),
        displacement: last.map(|r| r.displacement),
        termination: ev.termination(),
        error: error.as_ref().map(|e| e.to_string()),
    };
    checkin(&s, ev, error);
    let status = s.inner.lock().unwrap().status;
    Ok(Json(StepReply { status, ..reply }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRequest {
    /// Defaults to the session's iteration budget.
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

async fn run(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Option<Json<RunRequest>>,
) -> ApiResult<(StatusCode, Json<StateReply>)> {
    let s = app.session(&id)?;
    let mut ev = checkout(&s)?;
    let max = body
        .and_then(|Json(b)| b.max_iterations)
        .unwrap_or(ev.config().iterations);
    let worker = s.clone();
    tokio::task::spawn_blocking(move || {
        let mut error = None;
        for _ in 0..max {
            if worker.cancel.load(Ordering::Relaxed) {
                break;
            }
            match ev.step(&worker.image, &*worker.predictor) {
                Ok(Some(_)) => worker.inner.lock().unwrap().view = View::of(&ev),
                Ok(None) => break,
                Err(e) => {
                    error = Some(e);
                    break;
                }
            }
            if ev.is_finished() {
                break;
            }
        }
        checkin(&worker, ev, error);
    });
    Ok((StatusCode::ACCEPTED, Json(state_reply(&s))))
}

/// Raises the cancel flag and waits for the worker to finish its current
/// iteration.
async fn stop(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<StateReply>> {
    let s = app.session(&id)?;
    s.cancel.store(true, Ordering::Relaxed);
    while s.inner.lock().unwrap().busy {
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    Ok(Json(state_reply(&s)))
}

async fn mask(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let s = app.session(&id)?;
    let curve = s
        .inner
        .lock()
        .unwrap()
        .view
        .curve
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no contour set"))?;
    let curve = CurveJson {
        vertices: curve,
        closed: true,
    }
    .to_curve::<f32>()
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let png = encode_mask_png(&rasterize(&curve, s.image.width(), s.image.height()))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

/// Full trace; only available while no worker holds the evolution.
async fn trace(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let s = app.session(&id)?;
    let inner = s.inner.lock().unwrap();
    if inner.busy {
        return Err(ApiError::busy());
    }
    let ev = inner
        .evolution
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no contour set"))?;
    Ok(Json(ev.trace()).into_response())
}
