use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{Engine, Event, HistoryEntry, NoSink, Session, StepError, UserProfile};
use crate::flow::{is_slot_key, Phase};
use crate::llm::{LlmExchange, LlmGateway, Outcome, ScriptedTransport, StubReply};

/// Persisted form of a [`Session`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub current_state: String,
    pub phase: Phase,
    pub profile: BTreeMap<String, String>,
    pub turn_count: u32,
    pub ended: bool,
    pub created_at: u64,
    pub updated_at: u64,
    #[serde(default)]
    pub history: Vec<HistoryEntry>,
    #[serde(default)]
    pub recommended: Option<[String; 2]>,
    #[serde(default)]
    pub next_seq: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid snapshot: {0}")]
pub struct SchemaError(pub String);

impl From<&Session> for SessionSnapshot {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.session_id.clone(),
            current_state: s.current_state.clone(),
            phase: s.phase,
            profile: s.profile.slots.clone(),
            turn_count: s.turn_count,
            ended: s.ended,
            created_at: s.created_at_ms,
            updated_at: s.updated_at_ms,
            history: s.history.clone(),
            recommended: s.recommended.clone(),
            next_seq: s.next_seq,
        }
    }
}

impl SessionSnapshot {
    /// Check the snapshot against the engine's flow and catalog and rebuild
    /// the session.
    pub fn restore(&self, engine: &Engine) -> Result<Session, SchemaError> {
        let err = |m: String| Err(SchemaError(m));
        if !is_session_id(&self.session_id) {
            return err(format!("bad session id `{}`", self.session_id));
        }
        let Some(state) = engine.graph().state(&self.current_state) else {
            return err(format!("unknown state `{}`", self.current_state));
        };
        if state.phase != self.phase {
            return err(format!("state `{}` is in phase {}, not {}", state.id, state.phase, self.phase));
        }
        if let Some(k) = self.profile.keys().find(|k| !is_slot_key(k)) {
            return err(format!("bad profile key `{k}`"));
        }
        if let Some(ids) = &self.recommended {
            if let Some(id) = ids.iter().find(|id| engine.catalog().get(id).is_none()) {
                return err(format!("unknown route `{id}`"));
            }
        }
        if self.ended && !state.is_terminal() {
            return err(format!("ended session in non-terminal state `{}`", state.id));
        }
        let session = Session {
            session_id: self.session_id.clone(),
            current_state: self.current_state.clone(),
            phase: self.phase,
            profile: UserProfile {
                slots: self.profile.clone(),
            },
            history: self.history.clone(),
            turn_count: self.turn_count,
            ended: self.ended,
            recommended: self.recommended.clone(),
            next_seq: self.next_seq,
            created_at_ms: self.created_at,
            updated_at_ms: self.updated_at,
        };
        if !session.history.is_empty() {
            session.check_history().map_err(SchemaError)?;
        }
        Ok(session)
    }
}

/// Session ids double as file names, so they are restricted to
/// `[A-Za-z0-9_-]`.
pub fn is_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// One line of a session's turn log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    /// `None` for the opening turn.
    pub user_text: Option<String>,
    pub now_ms: u64,
    pub first_seq: u64,
    pub events: Vec<Event>,
    #[serde(default)]
    pub exchanges: Vec<LlmExchange>,
}

pub trait SessionStore: Send + Sync {
    fn save_snapshot(&self, snapshot: &SessionSnapshot) -> io::Result<()>;
    fn load_snapshot(&self, session_id: &str) -> io::Result<Option<SessionSnapshot>>;
    /// Append-only.
    fn append_turn(&self, session_id: &str, record: &TurnRecord) -> io::Result<()>;
    fn turn_log(&self, session_id: &str) -> io::Result<Vec<TurnRecord>>;
}

#[derive(Default)]
pub struct MemoryStore {
    snapshots: Mutex<HashMap<String, SessionSnapshot>>,
    logs: Mutex<HashMap<String, Vec<TurnRecord>>>,
}

impl MemoryStore {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }
}

impl SessionStore for MemoryStore {
    fn save_snapshot(&self, snapshot: &SessionSnapshot) -> io::Result<()> {
        self.snapshots
            .lock()
            .unwrap()
            .insert(snapshot.session_id.clone(), snapshot.clone());
        Ok(())
    }

    fn load_snapshot(&self, session_id: &str) -> io::Result<Option<SessionSnapshot>> {
        Ok(self.snapshots.lock().unwrap().get(session_id).cloned())
    }

    fn append_turn(&self, session_id: &str, record: &TurnRecord) -> io::Result<()> {
        self.logs
            .lock()
            .unwrap()
            .entry(session_id.to_string())
            .or_default()
            .push(record.clone());
        Ok(())
    }

    fn turn_log(&self, session_id: &str) -> io::Result<Vec<TurnRecord>> {
        Ok(self.logs.lock().unwrap().get(session_id).cloned().unwrap_or_default())
    }
}

/// `<dir>/sessions/<id>.json` snapshots and `<dir>/logs/<id>.jsonl` turn logs.
pub struct FileStore {
    dir: PathBuf,
    // Serializes writers within this process.
    lock: Mutex<()>,
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Arc<Self>> {
        let dir = dir.into();
        fs::create_dir_all(dir.join("sessions"))?;
        fs::create_dir_all(dir.join("logs"))?;
        Ok(Arc::new(Self {
            dir,
            lock: Mutex::new(()),
        }))
    }

    fn path(&self, kind: &str, id: &str, ext: &str) -> io::Result<PathBuf> {
        if !is_session_id(id) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("bad session id `{id}`")));
        }
        Ok(self.dir.join(kind).join(format!("{id}.{ext}")))
    }
}

impl SessionStore for FileStore {
    fn save_snapshot(&self, snapshot: &SessionSnapshot) -> io::Result<()> {
        let path = self.path("sessions", &snapshot.session_id, "json")?;
        let tmp = path.with_extension("json.tmp");
        let _guard = self.lock.lock().unwrap();
        fs::write(&tmp, serde_json::to_vec_pretty(snapshot)?)?;
        fs::rename(tmp, path)
    }

    fn load_snapshot(&self, session_id: &str) -> io::Result<Option<SessionSnapshot>> {
        let path = self.path("sessions", session_id, "json")?;
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn append_turn(&self, session_id: &str, record: &TurnRecord) -> io::Result<()> {
        let path = self.path("logs", session_id, "jsonl")?;
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let _guard = self.lock.lock().unwrap();
        OpenOptions::new().create(true).append(true).open(path)?.write_all(&line)
    }

    fn turn_log(&self, session_id: &str) -> io::Result<Vec<TurnRecord>> {
        let path = self.path("logs", session_id, "jsonl")?;
        let file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("turn log is empty")]
    EmptyLog,
    #[error("turn log does not start with the opening turn")]
    NoOpening,
    #[error("turn {turn}: {source}")]
    Step {
        turn: usize,
        #[source]
        source: StepError,
    },
}

/// Re-run a turn log through `engine`, answering LLM calls with the logged
/// answers. Returns the regenerated records; a faithful replay equals the
/// input.
pub fn replay_log(engine: &Engine, session_id: &str, log: &[TurnRecord]) -> Result<Vec<TurnRecord>, ReplayError> {
    let (opening, turns) = log.split_first().ok_or(ReplayError::EmptyLog)?;
    if opening.user_text.is_some() {
        return Err(ReplayError::NoOpening);
    }
    let replies: Vec<StubReply> = log
        .iter()
        .flat_map(|r| &r.exchanges)
        .map(|x| match (x.outcome, &x.answer) {
            (Outcome::Ok, Some(a)) => StubReply::Answer(a.clone()),
            (Outcome::Timeout, _) => StubReply::TimedOut,
            (Outcome::Filtered, _) | (Outcome::Ok, None) => StubReply::Filtered,
            (Outcome::HttpError, _) => StubReply::HttpError(500),
        })
        .collect();
    let transport = ScriptedTransport::sequence(replies, StubReply::Filtered);
    let engine = engine.with_llm(LlmGateway::new(engine.llm().config().clone(), Arc::new(transport)));

    let step_err = |turn: usize| move |source| ReplayError::Step { turn, source };
    let (mut session, out) = engine
        .create_session_with_id(session_id, opening.now_ms, &mut NoSink)
        .map_err(step_err(0))?;
    let mut records = vec![TurnRecord {
        user_text: None,
        now_ms: opening.now_ms,
        first_seq: out.first_seq,
        events: out.events,
        exchanges: out.exchanges,
    }];
    for (i, rec) in turns.iter().enumerate() {
        let text = rec.user_text.clone().unwrap_or_default();
        let out = engine
            .step(&mut session, &text, rec.now_ms, &mut NoSink)
            .map_err(step_err(i + 1))?;
        records.push(TurnRecord {
            user_text: Some(text),
            now_ms: rec.now_ms,
            first_seq: out.first_seq,
            events: out.events,
            exchanges: out.exchanges,
        });
    }
    Ok(records)
}
