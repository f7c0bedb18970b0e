//! C ABI for the tourflow engine.
//!
//! Engines and sessions are opaque handles. Every fallible call returns a
//! [`TfStatus`]; on failure a message for the calling thread is available
//! from [`tf_last_error`]. Strings handed out by the library are
//! NUL-terminated UTF-8 and must be released with [`tf_string_free`].
//!
//! Turn results are JSON arrays of events in the service wire format:
//! `[{"type": "utterance", "text": "...", "seq": 0}, ...]`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use tourflow::dialogue::{Engine, NoSink, Session, StepError, TurnOutput};
use tourflow::flow::parse_flow_sheet;
use tourflow::llm::{ChatRequest, ChatTransport, TransportError};
use tourflow::service::{ServiceConfig, SessionSnapshot, StartupError, WireEvent};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidFlow = 4,
    InvalidResources = 5,
    InvalidRoutes = 6,
    SessionEnded = 7,
    Schema = 8,
    Internal = 99,
}

/// Answers LLM questions on behalf of the engine.
///
/// `request_json` is `{"model": ..., "messages": [{"role", "content"}, ...]}`.
/// Write the UTF-8 answer into `out_buf` (at most `out_cap` bytes, no NUL
/// needed) and return the number of bytes written. Return -1 for a timeout,
/// -2 when the answer was filtered and any other negative value for a
/// transport failure. Called from a worker thread; may be called
/// concurrently when several sessions run at once.
pub type TfLlmCallback =
    Option<unsafe extern "C" fn(user_data: *mut c_void, request_json: *const c_char, out_buf: *mut c_char, out_cap: usize) -> i64>;

/// Size of the answer buffer passed to [`TfLlmCallback`].
pub const TF_ANSWER_CAPACITY: usize = 8192;

pub struct TfEngine {
    engine: Engine,
}

pub struct TfSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TfStatus, String);

impl Failure {
    fn new(status: TfStatus, message: impl Into<String>) -> Self {
        Self(status, message.into())
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TfStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TfStatus::Internal
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| Failure::new(TfStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn req_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    opt_str(p, what)?.ok_or_else(|| Failure::new(TfStatus::NullArgument, format!("{what} is null")))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(TfStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn into_c(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::new(TfStatus::Internal, "string contains NUL"))
}

fn events_json(engine: &Engine, out: &TurnOutput) -> Result<String, Failure> {
    let events: Vec<WireEvent> = out
        .sequenced()
        .map(|(seq, e)| WireEvent::from_event(seq, e, engine.catalog()))
        .collect();
    serde_json::to_string(&events).map_err(|e| Failure::new(TfStatus::Internal, e.to_string()))
}

struct CallbackTransport {
    callback: unsafe extern "C" fn(*mut c_void, *const c_char, *mut c_char, usize) -> i64,
    user_data: *mut c_void,
}

// The caller promises the callback and its user data may be used from any
// thread (see TfLlmCallback).
unsafe impl Send for CallbackTransport {}
unsafe impl Sync for CallbackTransport {}

impl ChatTransport for CallbackTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let http = |message: &str| TransportError::Http {
            status: None,
            message: message.into(),
        };
        let json = serde_json::to_string(request).map_err(|e| http(&e.to_string()))?;
        let json = CString::new(json).map_err(|_| http("request contains NUL"))?;
        let mut buf = vec![0u8; TF_ANSWER_CAPACITY];
        let n = unsafe { (self.callback)(self.user_data, json.as_ptr(), buf.as_mut_ptr().cast(), buf.len()) };
        match n {
            -1 => Err(TransportError::TimedOut),
            -2 => Err(TransportError::Filtered),
            n if n < 0 => Err(http(&format!("callback failed with {n}"))),
            n if n as usize > buf.len() => Err(http("callback overran the answer buffer")),
            n => {
                buf.truncate(n as usize);
                String::from_utf8(buf).map_err(|_| http("answer is not valid UTF-8"))
            }
        }
    }
}

/// Load a flow, NLU resources and route catalog and build an engine.
///
/// Null paths select the built-in Kyoto data. With a null `llm_callback` the
/// engine talks HTTP to the endpoint named by `TOURFLOW_LLM_ENDPOINT`.
#[no_mangle]
pub unsafe extern "C" fn tf_engine_new(
    flow_path: *const c_char,
    resources_dir: *const c_char,
    routes_path: *const c_char,
    llm_callback: TfLlmCallback,
    user_data: *mut c_void,
    out_engine: *mut *mut TfEngine,
) -> TfStatus {
    guard(|| {
        non_null(out_engine, "out_engine")?;
        *out_engine = ptr::null_mut();
        let mut config = ServiceConfig {
            flow_path: opt_str(flow_path, "flow_path")?.map(PathBuf::from),
            resources_dir: opt_str(resources_dir, "resources_dir")?.map(PathBuf::from),
            routes_path: opt_str(routes_path, "routes_path")?.map(PathBuf::from),
            ..ServiceConfig::default()
        };
        let transport: Arc<dyn ChatTransport> = match llm_callback {
            Some(callback) => Arc::new(CallbackTransport { callback, user_data }),
            None => {
                config
                    .apply_env(|k| std::env::var(k).ok())
                    .map_err(|e| Failure::new(TfStatus::Schema, e.to_string()))?;
                config.http_transport()
            }
        };
        let engine = config.build_engine(transport).map_err(startup_failure)?;
        *out_engine = Box::into_raw(Box::new(TfEngine { engine }));
        Ok(())
    })
}

fn startup_failure(e: StartupError) -> Failure {
    let status = match &e {
        StartupError::Config(tourflow::service::ConfigError::Io { .. }) => TfStatus::Io,
        StartupError::Config(_) => TfStatus::Schema,
        StartupError::Flow(_) | StartupError::Engine(_) => TfStatus::InvalidFlow,
        StartupError::Resources(_) => TfStatus::InvalidResources,
        StartupError::Routes(_) => TfStatus::InvalidRoutes,
    };
    let mut message = e.to_string();
    for d in e.diagnostics() {
        message.push('\n');
        message.push_str(&d.to_string());
    }
    Failure::new(status, message)
}

#[no_mangle]
pub unsafe extern "C" fn tf_engine_free(engine: *mut TfEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Start a session. `session_id` may be null for a random id. The opening
/// events are written to `out_events_json`.
#[no_mangle]
pub unsafe extern "C" fn tf_session_new(
    engine: *const TfEngine,
    session_id: *const c_char,
    now_ms: u64,
    out_session: *mut *mut TfSession,
    out_events_json: *mut *mut c_char,
) -> TfStatus {
    guard(|| {
        non_null(engine, "engine")?;
        non_null(out_session, "out_session")?;
        non_null(out_events_json, "out_events_json")?;
        *out_session = ptr::null_mut();
        *out_events_json = ptr::null_mut();
        let engine = &(*engine).engine;
        let result = match opt_str(session_id, "session_id")? {
            Some(id) => {
                if !tourflow::service::is_session_id(id) {
                    return Err(Failure::new(TfStatus::Schema, format!("invalid session id `{id}`")));
                }
                engine.create_session_with_id(id, now_ms, &mut NoSink)
            }
            None => engine.create_session(now_ms),
        };
        let (session, out) = result.map_err(step_failure)?;
        let json = events_json(engine, &out)?;
        *out_events_json = into_c(json)?;
        *out_session = Box::into_raw(Box::new(TfSession { session }));
        Ok(())
    })
}

fn step_failure(e: StepError) -> Failure {
    match e {
        StepError::SessionEnded => Failure::new(TfStatus::SessionEnded, "session has ended"),
        other => Failure::new(TfStatus::Internal, other.to_string()),
    }
}

/// Feed one user utterance. On failure the session is left unchanged.
#[no_mangle]
pub unsafe extern "C" fn tf_session_step(
    engine: *const TfEngine,
    session: *mut TfSession,
    text: *const c_char,
    now_ms: u64,
    out_events_json: *mut *mut c_char,
) -> TfStatus {
    guard(|| {
        non_null(engine, "engine")?;
        non_null(session, "session")?;
        non_null(out_events_json, "out_events_json")?;
        *out_events_json = ptr::null_mut();
        let text = req_str(text, "text")?;
        let engine = &(*engine).engine;
        let out = engine
            .step(&mut (*session).session, text, now_ms, &mut NoSink)
            .map_err(step_failure)?;
        *out_events_json = into_c(events_json(engine, &out)?)?;
        Ok(())
    })
}

/// True once the dialogue has ended.
#[no_mangle]
pub unsafe extern "C" fn tf_session_ended(session: *const TfSession) -> bool {
    !session.is_null() && (*session).session.ended
}

/// Serialize the session as a JSON snapshot.
#[no_mangle]
pub unsafe extern "C" fn tf_session_snapshot(session: *const TfSession, out_json: *mut *mut c_char) -> TfStatus {
    guard(|| {
        non_null(session, "session")?;
        non_null(out_json, "out_json")?;
        *out_json = ptr::null_mut();
        let json = serde_json::to_string(&SessionSnapshot::from(&(*session).session))
            .map_err(|e| Failure::new(TfStatus::Internal, e.to_string()))?;
        *out_json = into_c(json)?;
        Ok(())
    })
}

/// Rebuild a session from a snapshot, checking it against the engine's flow.
#[no_mangle]
pub unsafe extern "C" fn tf_session_restore(
    engine: *const TfEngine,
    snapshot_json: *const c_char,
    out_session: *mut *mut TfSession,
) -> TfStatus {
    guard(|| {
        non_null(engine, "engine")?;
        non_null(out_session, "out_session")?;
        *out_session = ptr::null_mut();
        let json = req_str(snapshot_json, "snapshot_json")?;
        let snapshot: SessionSnapshot =
            serde_json::from_str(json).map_err(|e| Failure::new(TfStatus::Schema, e.to_string()))?;
        let session = snapshot
            .restore(&(*engine).engine)
            .map_err(|e| Failure::new(TfStatus::Schema, e.to_string()))?;
        *out_session = Box::into_raw(Box::new(TfSession { session }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tf_session_free(session: *mut TfSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

#[no_mangle]
pub unsafe extern "C" fn tf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn tf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Check a flow sheet file. Diagnostics are written as a JSON array to
/// `out_diagnostics_json` (empty array when the flow is valid); the status
/// is `Ok` only when there are none.
#[no_mangle]
pub unsafe extern "C" fn tf_validate_flow(
    flow_path: *const c_char,
    strict_questions: bool,
    out_diagnostics_json: *mut *mut c_char,
) -> TfStatus {
    guard(|| {
        non_null(out_diagnostics_json, "out_diagnostics_json")?;
        *out_diagnostics_json = ptr::null_mut();
        let path = req_str(flow_path, "flow_path")?;
        let text = std::fs::read_to_string(path).map_err(|e| Failure::new(TfStatus::Io, format!("{path}: {e}")))?;
        let diags = parse_flow_sheet(&text, strict_questions).err().unwrap_or_default();
        let json = serde_json::to_string(&diags).map_err(|e| Failure::new(TfStatus::Internal, e.to_string()))?;
        *out_diagnostics_json = into_c(json)?;
        if diags.is_empty() {
            Ok(())
        } else {
            Err(Failure::new(TfStatus::InvalidFlow, format!("{} diagnostic(s)", diags.len())))
        }
    })
}
