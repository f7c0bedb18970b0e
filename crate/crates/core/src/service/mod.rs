//! HTTP session service.
//!
//! | method | path                          | body / response                         |
//! |--------|-------------------------------|-----------------------------------------|
//! | POST   | `/v1/sessions`                | 201 `{session_id, events}`              |
//! | POST   | `/v1/sessions/:id/utterances` | `{"text"}` → `{session_id, events}`, or SSE with `Accept: text/event-stream` |
//! | GET    | `/v1/sessions/:id`            | snapshot                                |
//! | PUT    | `/v1/sessions/:id`            | snapshot in, restored snapshot out      |
//! | GET    | `/v1/sessions/:id/events`     | SSE of every event of the session       |
//!
//! Turns of one session run one at a time. With [`QueuePolicy::Queue`] a
//! request arriving during a turn waits; with [`QueuePolicy::Reject`] it gets
//! 409.

mod config;
mod store;
mod wire;

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{Stream, StreamExt};
use serde_json::json;
use tokio::sync::{broadcast, mpsc, OwnedMutexGuard};

use crate::dialogue::{Engine, Event, Session, StepError, TurnOutput};

pub use config::{ConfigError, QueuePolicy, ServiceConfig, ServiceSection, StartupError};
pub use store::{
    is_session_id, replay_log, FileStore, MemoryStore, ReplayError, SchemaError, SessionSnapshot, SessionStore,
    TurnRecord,
};
pub use wire::WireEvent;

/// Milliseconds since the Unix epoch, or whatever a test wants.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    })
}

const EVENT_BUFFER: usize = 256;

struct Slot {
    session: Arc<tokio::sync::Mutex<Session>>,
    events: broadcast::Sender<WireEvent>,
}

impl Slot {
    fn new(session: Session) -> Arc<Self> {
        Arc::new(Self {
            session: Arc::new(tokio::sync::Mutex::new(session)),
            events: broadcast::channel(EVENT_BUFFER).0,
        })
    }
}

pub struct Service {
    engine: Result<Engine, String>,
    store: Arc<dyn SessionStore>,
    policy: QueuePolicy,
    clock: Clock,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
}

impl Service {
    pub fn new(engine: Engine, store: Arc<dyn SessionStore>, policy: QueuePolicy) -> Self {
        Self {
            engine: Ok(engine),
            store,
            policy,
            clock: system_clock(),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    /// A service whose flow failed to load. Session endpoints answer 503.
    pub fn unavailable(reason: impl Into<String>) -> Self {
        Self {
            engine: Err(reason.into()),
            store: MemoryStore::new(),
            policy: QueuePolicy::Queue,
            clock: system_clock(),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn store(&self) -> &Arc<dyn SessionStore> {
        &self.store
    }

    fn engine(&self) -> Result<&Engine, ApiError> {
        self.engine
            .as_ref()
            .map_err(|reason| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", reason.clone()))
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        if let Some(slot) = self.sessions.lock().unwrap().get(id) {
            return Ok(slot.clone());
        }
        let not_found = || ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session `{id}`"));
        if !is_session_id(id) {
            return Err(not_found());
        }
        let snapshot = self.store.load_snapshot(id).map_err(ApiError::internal)?.ok_or_else(not_found)?;
        let session = snapshot.restore(self.engine()?).map_err(ApiError::internal)?;
        let mut sessions = self.sessions.lock().unwrap();
        Ok(sessions.entry(id.to_string()).or_insert_with(|| Slot::new(session)).clone())
    }

    fn record(&self, session: &Session, user_text: Option<String>, now_ms: u64, out: &TurnOutput) -> Result<(), ApiError> {
        let record = TurnRecord {
            user_text,
            now_ms,
            first_seq: out.first_seq,
            events: out.events.clone(),
            exchanges: out.exchanges.clone(),
        };
        self.store
            .append_turn(&session.session_id, &record)
            .and_then(|_| self.store.save_snapshot(&SessionSnapshot::from(session)))
            .map_err(ApiError::internal)
    }

    fn wire(&self, engine: &Engine, out: &TurnOutput) -> Vec<WireEvent> {
        out.sequenced()
            .map(|(seq, e)| WireEvent::from_event(seq, e, engine.catalog()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        tracing::error!(error = %e, "request failed");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn body(&self) -> serde_json::Value {
        json!({"error": self.code, "message": self.message})
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

impl From<StepError> for ApiError {
    fn from(e: StepError) -> Self {
        match e {
            StepError::SessionEnded => ApiError::new(StatusCode::CONFLICT, "ended", "session has ended"),
            other => ApiError::internal(other),
        }
    }
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/:id", get(get_session).put(put_session))
        .route("/v1/sessions/:id/utterances", post(post_utterance))
        .route("/v1/sessions/:id/events", get(session_events))
        .with_state(service)
}

/// Build everything from `config`, refusing to start on any diagnostic, and
/// serve until the process is stopped.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let engine = config.build_engine(config.http_transport())?;
    let store: Arc<dyn SessionStore> = match &config.service.data_dir {
        Some(dir) => FileStore::open(dir)?,
        None => MemoryStore::new(),
    };
    let service = Arc::new(Service::new(engine, store, config.service.queue_policy));
    let listener = tokio::net::TcpListener::bind((config.service.host.as_str(), config.service.port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(service)).await?;
    Ok(())
}

async fn health(State(svc): State<Arc<Service>>) -> Result<Json<serde_json::Value>, ApiError> {
    svc.engine()?;
    Ok(Json(json!({"status": "ok"})))
}

async fn create_session(State(svc): State<Arc<Service>>) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    svc.engine()?;
    let worker = svc.clone();
    let (id, events) = tokio::task::spawn_blocking(move || {
        let engine = worker.engine()?;
        let now = (worker.clock)();
        let (session, out) = engine.create_session(now)?;
        worker.record(&session, None, now, &out)?;
        let events = worker.wire(engine, &out);
        let id = session.session_id.clone();
        worker.sessions.lock().unwrap().insert(id.clone(), Slot::new(session));
        Ok::<_, ApiError>((id, events))
    })
    .await
    .map_err(ApiError::internal)??;
    Ok((StatusCode::CREATED, Json(json!({"session_id": id, "events": events}))))
}

async fn get_session(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
) -> Result<Json<SessionSnapshot>, ApiError> {
    svc.engine()?;
    let slot = svc.slot(&id)?;
    let session = slot.session.lock().await;
    Ok(Json(SessionSnapshot::from(&*session)))
}

async fn put_session(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionSnapshot>, ApiError> {
    let engine = svc.engine()?;
    let snapshot: SessionSnapshot =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("schema", e.to_string()))?;
    if snapshot.session_id != id {
        return Err(ApiError::bad_request("schema", "session_id does not match the path"));
    }
    let session = snapshot
        .restore(engine)
        .map_err(|e| ApiError::bad_request("schema", e.to_string()))?;
    svc.store.save_snapshot(&snapshot).map_err(ApiError::internal)?;
    let existing = svc.sessions.lock().unwrap().get(&id).cloned();
    match existing {
        Some(slot) => *slot.session.lock().await = session,
        None => {
            svc.sessions.lock().unwrap().insert(id, Slot::new(session));
        }
    }
    Ok(Json(snapshot))
}

enum TurnMsg {
    Event(WireEvent),
    Failed(ApiError),
}

fn parse_text(body: &[u8]) -> Result<String, ApiError> {
    let value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| ApiError::bad_request("bad_request", format!("invalid JSON: {e}")))?;
    match value.get("text") {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ApiError::bad_request("bad_request", "`text` must be a string")),
        None => Err(ApiError::bad_request("bad_request", "missing `text`")),
    }
}

fn wants_event_stream(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("text/event-stream"))
}

async fn post_utterance(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    svc.engine()?;
    let text = parse_text(&body)?;
    let slot = svc.slot(&id)?;
    let guard = match svc.policy {
        QueuePolicy::Queue => slot.session.clone().lock_owned().await,
        QueuePolicy::Reject => slot
            .session
            .clone()
            .try_lock_owned()
            .map_err(|_| ApiError::new(StatusCode::CONFLICT, "busy", "a turn is already in progress"))?,
    };
    if guard.ended {
        return Err(StepError::SessionEnded.into());
    }

    let (tx, rx) = mpsc::unbounded_channel();
    let worker = svc.clone();
    let task = tokio::task::spawn_blocking(move || {
        let result = run_turn(&worker, guard, &slot, text, &tx);
        if let Err(e) = &result {
            let _ = tx.send(TurnMsg::Failed(e.clone()));
        }
        result
    });

    if wants_event_stream(&headers) {
        let stream = futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|m| (m, rx)) }).map(|m| {
            Ok::<_, Infallible>(match m {
                TurnMsg::Event(w) => sse_event(&w),
                TurnMsg::Failed(e) => SseEvent::default().event("error").data(e.body().to_string()),
            })
        });
        return Ok(Sse::new(stream).into_response());
    }
    drop(rx);
    let events = task.await.map_err(ApiError::internal)??;
    Ok(Json(json!({"session_id": id, "events": events})).into_response())
}

/// Runs on a blocking thread. Events go to the per-request channel and the
/// session's broadcast as soon as the engine produces them.
fn run_turn(
    svc: &Service,
    mut guard: OwnedMutexGuard<Session>,
    slot: &Slot,
    text: String,
    tx: &mpsc::UnboundedSender<TurnMsg>,
) -> Result<Vec<WireEvent>, ApiError> {
    let engine = svc.engine()?;
    let now = (svc.clock)();
    let mut wire = Vec::new();
    let mut sink = |seq: u64, event: &Event| {
        let w = WireEvent::from_event(seq, event, engine.catalog());
        let _ = slot.events.send(w.clone());
        let _ = tx.send(TurnMsg::Event(w.clone()));
        wire.push(w);
    };
    let out = engine.step(&mut guard, &text, now, &mut sink)?;
    svc.record(&guard, Some(text), now, &out)?;
    Ok(wire)
}

fn sse_event(w: &WireEvent) -> SseEvent {
    SseEvent::default()
        .event(w.kind.clone())
        .id(w.seq.to_string())
        .data(serde_json::to_string(w).unwrap_or_default())
}

async fn session_events(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    svc.engine()?;
    let rx = svc.slot(&id)?.events.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(w) => return Some((Ok(sse_event(&w)), rx)),
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::warn!(skipped = n, "event subscriber lagged");
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
