//! HTTP service: isolated sessions, ordered mutating commands per session,
//! snapshot reads and a server-sent telemetry stream.
//!
//! Mutations take the session's fair async mutex, so they run one at a time
//! in arrival order. A running execution holds that mutex until it ends;
//! status, scene and telemetry reads never wait for it.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, OwnedMutexGuard};
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::{Stream, StreamExt};

use surfteach_core::classifier::{read_gray_png, write_gray_png, ClassRegistry, ClassifierError, SharedRegistry, TOY_DIM};

use crate::error::WorkbenchError;
use crate::execute::RunReport;
use crate::headless::{define_input, Units};
use crate::plan::Plan;
use crate::scenario::Scenario;
use crate::scene::Scene;
use crate::session::{
    Detection, Reachability, Session, SessionStatus, StoredPath, Transition, TransitionObserver,
};
use crate::telemetry::{write_csv, TelemetryFrame};

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub kind: &'static str,
    pub error: String,
    /// Image pixel of a stroke that could not be projected or framed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pixel: Option<[usize; 2]>,
}

impl From<WorkbenchError> for ApiError {
    fn from(e: WorkbenchError) -> Self {
        use WorkbenchError as W;
        let (status, kind) = match &e {
            W::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            W::UnknownPath(_) => (StatusCode::NOT_FOUND, "unknown_path"),
            W::UnknownObject(_) => (StatusCode::NOT_FOUND, "unknown_object"),
            W::IllegalTransition { .. } => (StatusCode::CONFLICT, "illegal_transition"),
            W::Busy => (StatusCode::CONFLICT, "busy"),
            W::NotPaired(_) => (StatusCode::CONFLICT, "not_paired"),
            W::Unreachable { .. } => (StatusCode::CONFLICT, "unreachable"),
            W::Classifier(ClassifierError::DuplicateClass(_)) => (StatusCode::CONFLICT, "duplicate_class"),
            W::Classifier(ClassifierError::EmptySession) => (StatusCode::UNPROCESSABLE_ENTITY, "empty_session"),
            W::Classifier(ClassifierError::EmptyRegistry) => (StatusCode::CONFLICT, "empty_registry"),
            W::Classifier(_) => (StatusCode::UNPROCESSABLE_ENTITY, "classifier"),
            W::Geometry(_) | W::StrokeGeometry { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "geometry"),
            W::Scenario(_) => (StatusCode::UNPROCESSABLE_ENTITY, "scenario"),
            W::InvalidInput(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_input"),
            W::Dynamics(_) | W::Control(_) | W::Contact(_) | W::Sim(_) | W::Io(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        let pixel = match &e {
            W::StrokeGeometry { pixel, .. } => Some(*pixel),
            _ => None,
        };
        Self { status, kind, error: e.to_string(), pixel }
    }
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, kind: "bad_request", error: message.into(), pixel: None }
    }

    fn internal(message: impl ToString) -> Self {
        Self { status: StatusCode::INTERNAL_SERVER_ERROR, kind: "internal", error: message.to_string(), pixel: None }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Scene overlay: ground-truth boxes with the latest detection labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneView {
    pub width: usize,
    pub height: usize,
    pub objects: Vec<SceneObjectView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObjectView {
    pub name: String,
    pub bbox: [usize; 4],
    /// `None` before detection has run.
    pub detection: Option<Detection>,
}

#[derive(Clone)]
enum StreamEvent {
    Frame { run: u64, frame: TelemetryFrame },
    Status(Box<SessionStatus>),
}

#[derive(Default)]
struct LiveRun {
    run: u64,
    frames: Vec<TelemetryFrame>,
}

struct Snapshot {
    status: SessionStatus,
    scene: SceneView,
}

struct Handle {
    session: Arc<tokio::sync::Mutex<Session>>,
    snapshot: RwLock<Arc<Snapshot>>,
    live: Mutex<LiveRun>,
    events: broadcast::Sender<StreamEvent>,
    abort: AtomicBool,
    png: Bytes,
}

fn scene_view(session: &Session) -> SceneView {
    let dets = session.detections();
    SceneView {
        width: session.scene.image.width(),
        height: session.scene.image.height(),
        objects: session
            .scene
            .objects
            .iter()
            .map(|o| SceneObjectView {
                name: o.name.clone(),
                bbox: o.bbox,
                detection: dets.iter().find(|d| d.truth == o.name).cloned(),
            })
            .collect(),
    }
}

impl Handle {
    /// Wraps `session` and publishes each of its transitions as it happens.
    fn create(session: Session) -> ApiResult<Arc<Self>> {
        let h = Arc::new(Self::new(session)?);
        let weak = Arc::downgrade(&h);
        let observer: TransitionObserver = Arc::new(move |t: &Transition| {
            if let Some(h) = weak.upgrade() {
                h.observe(t);
            }
        });
        h.session.try_lock().expect("fresh session is unlocked").set_observer(Some(observer));
        Ok(h)
    }

    fn observe(&self, t: &Transition) {
        let status = {
            let mut guard = self.snapshot.write().expect("snapshot lock");
            let mut status = guard.status.clone();
            status.phase = t.to;
            status.transitions.push(t.clone());
            *guard = Arc::new(Snapshot { status: status.clone(), scene: guard.scene.clone() });
            status
        };
        let _ = self.events.send(StreamEvent::Status(Box::new(status)));
    }

    fn new(session: Session) -> ApiResult<Self> {
        let mut png = Vec::new();
        write_gray_png(&session.scene.image, &mut png).map_err(|e| ApiError::from(WorkbenchError::from(e)))?;
        let snapshot = Snapshot { status: session.status(), scene: scene_view(&session) };
        Ok(Self {
            session: Arc::new(tokio::sync::Mutex::new(session)),
            snapshot: RwLock::new(Arc::new(snapshot)),
            live: Mutex::new(LiveRun::default()),
            events: broadcast::channel(4096).0,
            abort: AtomicBool::new(false),
            png: Bytes::from(png),
        })
    }

    fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn refresh(&self, session: &Session) {
        let status = session.status();
        let snap = Snapshot { status: status.clone(), scene: scene_view(session) };
        *self.snapshot.write().expect("snapshot lock") = Arc::new(snap);
        let _ = self.events.send(StreamEvent::Status(Box::new(status)));
    }
}

/// Shared service state: the default scenario with its prebuilt scene and
/// the live sessions.
pub struct AppState {
    scenario: Scenario,
    scene: Arc<Scene>,
    sessions: RwLock<BTreeMap<u64, Arc<Handle>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(scenario: Scenario) -> crate::Result<Self> {
        let scene = Arc::new(Scene::build(&scenario)?);
        Ok(Self { scenario, scene, sessions: RwLock::new(BTreeMap::new()), next_id: AtomicU64::new(1) })
    }

    fn handle(&self, id: u64) -> ApiResult<Arc<Handle>> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(&id)
            .cloned()
            .ok_or_else(|| WorkbenchError::UnknownSession(id).into())
    }
}

type Shared = Arc<AppState>;

/// Runs `f` on the session under its command lock, off the async workers,
/// then publishes a fresh snapshot whether or not `f` succeeded.
async fn mutate<T, F>(h: Arc<Handle>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Session) -> crate::Result<T> + Send + 'static,
{
    let guard = h.session.clone().lock_owned().await;
    tokio::task::spawn_blocking(move || {
        let mut guard = guard;
        let r = f(&mut guard);
        h.refresh(&guard);
        r.map_err(ApiError::from)
    })
    .await
    .map_err(ApiError::internal)?
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    /// Scenario document; the server's scenario when absent.
    #[serde(default)]
    scenario: Option<String>,
}

#[derive(Debug, Serialize)]
struct Created {
    id: u64,
    status: SessionStatus,
}

async fn create_session(State(state): State<Shared>, body: Bytes) -> ApiResult<(StatusCode, Json<Created>)> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) { CreateSession::default() } else { parse_json(&body)? };
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    let st = state.clone();
    let handle = tokio::task::spawn_blocking(move || -> ApiResult<Arc<Handle>> {
        let session = match req.scenario {
            Some(text) => Session::new(id, Scenario::from_toml(&text, &st.scenario.base_dir).map_err(WorkbenchError::from)?)?,
            None => {
                let registry = SharedRegistry::new(ClassRegistry::new(TOY_DIM).map_err(WorkbenchError::from)?);
                Session::with_scene(id, st.scenario.clone(), st.scene.clone(), registry)?
            }
        };
        Handle::create(session)
    })
    .await
    .map_err(ApiError::internal)??;
    let status = handle.snapshot().status.clone();
    state.sessions.write().expect("session table lock").insert(id, handle);
    Ok((StatusCode::CREATED, Json(Created { id, status })))
}

async fn list_sessions(State(state): State<Shared>) -> Json<Vec<u64>> {
    Json(state.sessions.read().expect("session table lock").keys().copied().collect())
}

async fn get_session(State(state): State<Shared>, Path(id): Path<u64>) -> ApiResult<Json<SessionStatus>> {
    Ok(Json(state.handle(id)?.snapshot().status.clone()))
}

async fn delete_session(State(state): State<Shared>, Path(id): Path<u64>) -> ApiResult<StatusCode> {
    let h = state.sessions.write().expect("session table lock").remove(&id);
    let h = h.ok_or(WorkbenchError::UnknownSession(id))?;
    h.abort.store(true, Ordering::Relaxed);
    Ok(StatusCode::NO_CONTENT)
}

async fn scene_png(State(state): State<Shared>, Path(id): Path<u64>) -> ApiResult<Response> {
    let h = state.handle(id)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], h.png.clone()).into_response())
}

async fn scene(State(state): State<Shared>, Path(id): Path<u64>) -> ApiResult<Json<SceneView>> {
    Ok(Json(state.handle(id)?.snapshot().scene.clone()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TeachRequest {
    name: String,
    /// Base64 grayscale PNG patches; without them the scene object `name`
    /// is taught from simulated views.
    #[serde(default)]
    patches: Option<Vec<String>>,
    #[serde(default)]
    samples: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Taught {
    name: String,
    samples: u64,
}

async fn teach(State(state): State<Shared>, Path(id): Path<u64>, body: Bytes) -> ApiResult<Json<Taught>> {
    let h = state.handle(id)?;
    let req: TeachRequest = parse_json(&body)?;
    let patches = match &req.patches {
        None => None,
        Some(list) => Some(
            list.iter()
                .enumerate()
                .map(|(i, b64)| {
                    let raw = base64::engine::general_purpose::STANDARD
                        .decode(b64.trim())
                        .map_err(|e| ApiError::bad_request(format!("patch {i}: {e}")))?;
                    read_gray_png(raw.as_slice()).map_err(|e| ApiError::from(WorkbenchError::from(e)))
                })
                .collect::<ApiResult<Vec<_>>>()?,
        ),
    };
    let record = mutate(h, move |s| match patches {
        Some(p) => s.teach_object(&req.name, &p),
        None => s.teach_from_scene(&req.name, req.samples),
    })
    .await?;
    Ok(Json(Taught { name: record.name, samples: record.sample_count }))
}

async fn remove_class(State(state): State<Shared>, Path((id, name)): Path<(u64, String)>) -> ApiResult<StatusCode> {
    mutate(state.handle(id)?, move |s| s.remove_class(&name)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn detect(State(state): State<Shared>, Path(id): Path<u64>) -> ApiResult<Json<Vec<Detection>>> {
    Ok(Json(mutate(state.handle(id)?, |s| s.detect_objects()).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRequest {
    #[serde(default)]
    units: Units,
    #[serde(default)]
    stroke: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    polygon: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    spacing: Option<f64>,
}

#[derive(Debug, Serialize)]
struct PathCreated {
    id: u64,
    path: StoredPath,
}

async fn define_path(
    State(state): State<Shared>,
    Path(id): Path<u64>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<PathCreated>)> {
    let req: PathRequest = parse_json(&body)?;
    let created = mutate(state.handle(id)?, move |s| {
        let pid = define_input(s, req.units, req.stroke.as_deref(), req.polygon.as_deref(), req.spacing)?;
        Ok(PathCreated { id: pid, path: s.path(pid)?.clone() })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_path(State(state): State<Shared>, Path((id, pid)): Path<(u64, u64)>) -> ApiResult<Json<StoredPath>> {
    let h = state.handle(id)?;
    // Path geometry is not part of the snapshot; wait for the command lock.
    let s = h.session.lock().await;
    Ok(Json(s.path(pid).map_err(ApiError::from)?.clone()))
}

async fn delete_path(State(state): State<Shared>, Path((id, pid)): Path<(u64, u64)>) -> ApiResult<StatusCode> {
    mutate(state.handle(id)?, move |s| s.delete_path(pid)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRequest {
    object: String,
}

async fn pair(State(state): State<Shared>, Path((id, pid)): Path<(u64, u64)>, body: Bytes) -> ApiResult<StatusCode> {
    let req: PairRequest = parse_json(&body)?;
    mutate(state.handle(id)?, move |s| s.pair_path(pid, &req.object)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn unpair(State(state): State<Shared>, Path((id, pid)): Path<(u64, u64)>) -> ApiResult<StatusCode> {
    mutate(state.handle(id)?, move |s| s.unpair_path(pid)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn reachability(State(state): State<Shared>, Path((id, pid)): Path<(u64, u64)>) -> ApiResult<Json<Reachability>> {
    Ok(Json(mutate(state.handle(id)?, move |s| s.check_reachability(pid)).await?))
}

#[derive(Debug, Serialize)]
struct Accepted {
    path: u64,
    run: u64,
}

fn run_in_background(h: Arc<Handle>, mut guard: OwnedMutexGuard<Session>, pid: u64, plan: Plan, run: u64) {
    tokio::task::spawn_blocking(move || {
        let hh = h.clone();
        let result = guard.run_execution(pid, &plan, |f| {
            hh.live.lock().expect("live lock").frames.push(f.clone());
            let _ = hh.events.send(StreamEvent::Frame { run, frame: f.clone() });
            !hh.abort.load(Ordering::Relaxed)
        });
        if let Err(e) = result {
            eprintln!("session {} path {pid}: {e}", guard.id);
        }
        h.refresh(&guard);
    });
}

/// Enters Executing before answering, then runs the path in the background
/// while holding the command lock.
async fn execute(State(state): State<Shared>, Path((id, pid)): Path<(u64, u64)>) -> ApiResult<(StatusCode, Json<Accepted>)> {
    let h = state.handle(id)?;
    let guard = h.session.clone().lock_owned().await;
    let hh = h.clone();
    let (guard, begun) = tokio::task::spawn_blocking(move || {
        let mut guard = guard;
        let r = guard.begin_execution(pid);
        hh.refresh(&guard);
        (guard, r)
    })
    .await
    .map_err(ApiError::internal)?;
    let plan = begun?;
    let run = {
        let mut live = h.live.lock().expect("live lock");
        live.run += 1;
        live.frames.clear();
        live.run
    };
    h.abort.store(false, Ordering::Relaxed);
    run_in_background(h, guard, pid, plan, run);
    Ok((StatusCode::ACCEPTED, Json(Accepted { path: pid, run })))
}

async fn abort(State(state): State<Shared>, Path(id): Path<u64>) -> ApiResult<StatusCode> {
    state.handle(id)?.abort.store(true, Ordering::Relaxed);
    Ok(StatusCode::ACCEPTED)
}

#[derive(Debug, Serialize)]
struct TelemetryView {
    run: u64,
    frames: Vec<TelemetryFrame>,
    last_run: Option<RunReport>,
}

async fn telemetry(State(state): State<Shared>, Path(id): Path<u64>) -> ApiResult<Json<TelemetryView>> {
    let h = state.handle(id)?;
    let last_run = h.snapshot().status.last_run.clone();
    let live = h.live.lock().expect("live lock");
    Ok(Json(TelemetryView { run: live.run, frames: live.frames.clone(), last_run }))
}

async fn telemetry_csv(State(state): State<Shared>, Path(id): Path<u64>) -> ApiResult<Response> {
    let h = state.handle(id)?;
    let frames = h.live.lock().expect("live lock").frames.clone();
    let dof = frames.first().map_or(7, |f| f.q.len());
    let mut out = Vec::new();
    write_csv(&frames, dof, &mut out).map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], out).into_response())
}

/// `"<run>-<seq>"`, the id carried by every telemetry event.
fn parse_event_id(text: &str) -> Option<(u64, u64)> {
    let (run, seq) = text.trim().split_once('-')?;
    Some((run.parse().ok()?, seq.parse().ok()?))
}

fn frame_event(run: u64, f: &TelemetryFrame) -> Option<Event> {
    Event::default().event("telemetry").id(format!("{run}-{}", f.seq)).json_data(f).ok()
}

fn status_event(s: &SessionStatus) -> Option<Event> {
    Event::default().event("status").json_data(s).ok()
}

async fn stream(
    State(state): State<Shared>,
    Path(id): Path<u64>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = std::result::Result<Event, Infallible>>>> {
    let h = state.handle(id)?;
    let rx = h.events.subscribe();
    let resume = headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(parse_event_id);
    let (run, replay) = {
        let live = h.live.lock().expect("live lock");
        (live.run, live.frames.clone())
    };
    let sent_upto = replay.last().map(|f| (run, f.seq));
    let mut first: Vec<Event> = status_event(&h.snapshot().status).into_iter().collect();
    first.extend(
        replay
            .iter()
            .filter(|f| match resume {
                Some((r, s)) if r == run => f.seq > s,
                Some((r, _)) => r < run,
                None => true,
            })
            .filter_map(|f| frame_event(run, f)),
    );
    let live = BroadcastStream::new(rx).filter_map(move |msg| match msg.ok()? {
        StreamEvent::Frame { run, frame } => {
            if sent_upto.is_some_and(|last| (run, frame.seq) <= last) {
                return None;
            }
            frame_event(run, &frame)
        }
        StreamEvent::Status(s) => status_event(&s),
    });
    let events = tokio_stream::iter(first).chain(live).map(Ok);
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/scene", get(scene))
        .route("/sessions/{id}/scene.png", get(scene_png))
        .route("/sessions/{id}/teach", post(teach))
        .route("/sessions/{id}/classes/{name}", axum::routing::delete(remove_class))
        .route("/sessions/{id}/detect", post(detect))
        .route("/sessions/{id}/paths", post(define_path))
        .route("/sessions/{id}/paths/{pid}", get(get_path).delete(delete_path))
        .route("/sessions/{id}/paths/{pid}/pair", put(pair).delete(unpair))
        .route("/sessions/{id}/paths/{pid}/reachability", post(reachability))
        .route("/sessions/{id}/paths/{pid}/execute", post(execute))
        .route("/sessions/{id}/abort", post(abort))
        .route("/sessions/{id}/telemetry", get(telemetry))
        .route("/sessions/{id}/telemetry.csv", get(telemetry_csv))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(Arc::new(state))
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, scenario: Scenario) -> crate::Result<()> {
    let state = tokio::task::spawn_blocking(move || AppState::new(scenario))
        .await
        .map_err(|e| WorkbenchError::InvalidInput(e.to_string()))??;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
