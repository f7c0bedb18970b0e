//! Chat-completion transports. The gateway only sees [`ChatTransport`], so the
//! HTTP client can be replaced by a scripted stub for offline runs.

use std::collections::VecDeque;
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("credential variable `{0}` is not set")]
    MissingCredentials(String),
    #[error("request timed out")]
    TimedOut,
    #[error("answer withheld by content filter")]
    Filtered,
    #[error("http error{}: {message}", status.map(|s| format!(" {s}")).unwrap_or_default())]
    Http { status: Option<u16>, message: String },
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// OpenAI-style `POST {endpoint}` with a bearer token read from an
/// environment variable at call time.
pub struct HttpTransport {
    endpoint: String,
    api_key_env: String,
    timeout: Duration,
    // Built lazily so construction is safe inside an async runtime.
    client: OnceLock<reqwest::blocking::Client>,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, api_key_env: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key_env: api_key_env.into(),
            timeout,
            client: OnceLock::new(),
        }
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .timeout(self.timeout)
                .build()
                .unwrap_or_else(|_| reqwest::blocking::Client::new())
        })
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: Option<ChatMessage>,
    finish_reason: Option<String>,
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let key = std::env::var(&self.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| TransportError::MissingCredentials(self.api_key_env.clone()))?;
        let response = self
            .client()
            .post(&self.endpoint)
            .bearer_auth(key)
            .json(request)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::TimedOut
                } else {
                    TransportError::Http {
                        status: e.status().map(|s| s.as_u16()),
                        message: e.to_string(),
                    }
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(TransportError::Http {
                status: Some(status.as_u16()),
                message: response.text().unwrap_or_default(),
            });
        }
        let body: CompletionResponse = response.json().map_err(|e| {
            if e.is_timeout() {
                TransportError::TimedOut
            } else {
                TransportError::Http {
                    status: Some(status.as_u16()),
                    message: format!("malformed completion body: {e}"),
                }
            }
        })?;
        let choice = body.choices.into_iter().next().ok_or_else(|| TransportError::Http {
            status: Some(status.as_u16()),
            message: "completion has no choices".into(),
        })?;
        if choice.finish_reason.as_deref() == Some("content_filter") {
            return Err(TransportError::Filtered);
        }
        Ok(choice.message.map(|m| m.content).unwrap_or_default())
    }
}

/// One scripted reply, optionally delivered after a delay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubReply {
    Answer(String),
    TimedOut,
    HttpError(u16),
    Filtered,
}

/// Offline transport for tests, simulation and replay. Replies are taken from
/// a queue in order; once the queue is empty `fallback` is used.
pub struct ScriptedTransport {
    queue: Mutex<VecDeque<StubReply>>,
    fallback: StubReply,
    delay: Duration,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedTransport {
    pub fn answering(text: impl Into<String>) -> Self {
        Self::repeating(StubReply::Answer(text.into()))
    }

    pub fn repeating(reply: StubReply) -> Self {
        Self {
            queue: Mutex::new(VecDeque::new()),
            fallback: reply,
            delay: Duration::ZERO,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn sequence(replies: impl IntoIterator<Item = StubReply>, fallback: StubReply) -> Self {
        Self {
            queue: Mutex::new(replies.into_iter().collect()),
            ..Self::repeating(fallback)
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl ChatTransport for ScriptedTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.requests.lock().unwrap().push(request.clone());
        let reply = self
            .queue
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| self.fallback.clone());
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        match reply {
            StubReply::Answer(text) => Ok(text),
            StubReply::TimedOut => Err(TransportError::TimedOut),
            StubReply::HttpError(status) => Err(TransportError::Http {
                status: Some(status),
                message: "scripted failure".into(),
            }),
            StubReply::Filtered => Err(TransportError::Filtered),
        }
    }
}
