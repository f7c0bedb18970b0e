//! Answers free-form questions through an external chat-completion service.
//!
//! The filler utterance is handed to the caller before the request starts,
//! and every failure mode (timeout, HTTP error, filtered answer) is reported
//! as an [`Outcome`] so the turn can still finish with the fallback text.

mod prompt;
mod transport;

use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dialogue::Event;

pub use prompt::{build_prompt, Prompt, PromptContext, PromptLimits};
pub use transport::{ChatMessage, ChatRequest, ChatTransport, HttpTransport, ScriptedTransport, StubReply, TransportError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    #[serde(alias = "endpoint")]
    pub endpoint_url: String,
    #[serde(alias = "model")]
    pub model_name: String,
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub max_answer_chars: usize,
    pub filler_text: String,
    pub fallback_text: String,
    pub prompt_budget_chars: usize,
    pub history_turns: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-3.5-turbo".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_ms: 8000,
            max_answer_chars: 120,
            filler_text: "少々お待ちください".into(),
            fallback_text: "申し訳ありません、うまくお答えできませんでした。他に気になることはありますか？".into(),
            prompt_budget_chars: 1500,
            history_turns: 6,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.timeout_ms == 0 {
            return Err("llm.timeout_ms must be > 0".into());
        }
        if self.max_answer_chars == 0 {
            return Err("llm.max_answer_chars must be > 0".into());
        }
        if self.filler_text.trim().is_empty() || self.fallback_text.trim().is_empty() {
            return Err("llm filler and fallback texts must be non-empty".into());
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn limits(&self) -> PromptLimits {
        PromptLimits {
            history_turns: self.history_turns,
            budget_chars: self.prompt_budget_chars,
            max_answer_chars: self.max_answer_chars,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Timeout,
    HttpError,
    Filtered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub prompt: String,
    /// Present iff `outcome` is `Ok`.
    pub answer: Option<String>,
    pub latency_ms: u64,
    pub outcome: Outcome,
}

impl LlmExchange {
    /// Text to speak: the answer, or the fallback for any failure.
    pub fn spoken_text<'a>(&'a self, config: &'a LlmConfig) -> &'a str {
        match (&self.outcome, &self.answer) {
            (Outcome::Ok, Some(a)) => a,
            _ => &config.fallback_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmReply {
    /// Deliverable before the answer: the filler.
    pub prefix: Vec<Event>,
    pub exchange: LlmExchange,
}

#[derive(Clone)]
pub struct LlmGateway {
    config: LlmConfig,
    transport: Arc<dyn ChatTransport>,
}

impl LlmGateway {
    pub fn new(config: LlmConfig, transport: Arc<dyn ChatTransport>) -> Self {
        Self { config, transport }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// `on_prefix` receives the filler before the request is sent.
    pub fn answer_question(
        &self,
        question: &str,
        ctx: &PromptContext<'_>,
        on_prefix: &mut dyn FnMut(&Event),
    ) -> LlmReply {
        let filler = Event::filler(self.config.filler_text.clone());
        on_prefix(&filler);

        let prompt = build_prompt(question, ctx, self.config.limits());
        let request = ChatRequest {
            model: self.config.model_name.clone(),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: prompt.system.clone(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: prompt.user.clone(),
                },
            ],
        };

        let started = Instant::now();
        let result = self.call_with_timeout(request);
        let latency_ms = started.elapsed().as_millis() as u64;

        let (outcome, answer) = match result {
            Ok(text) => {
                let text = truncate_answer(text.trim(), self.config.max_answer_chars);
                if text.is_empty() {
                    (Outcome::Filtered, None)
                } else {
                    (Outcome::Ok, Some(text))
                }
            }
            Err(TransportError::TimedOut) => (Outcome::Timeout, None),
            Err(TransportError::Filtered) => (Outcome::Filtered, None),
            Err(TransportError::MissingCredentials(_)) | Err(TransportError::Http { .. }) => {
                (Outcome::HttpError, None)
            }
        };
        if outcome != Outcome::Ok {
            tracing::warn!(?outcome, latency_ms, "llm answer unavailable, using fallback");
        }
        LlmReply {
            prefix: vec![filler],
            exchange: LlmExchange {
                prompt: prompt.text(),
                answer,
                latency_ms,
                outcome,
            },
        }
    }

    // The transport runs on its own thread so a stalled call cannot hold the
    // turn past the timeout; a late reply is dropped with the channel.
    fn call_with_timeout(&self, request: ChatRequest) -> Result<String, TransportError> {
        let (tx, rx) = mpsc::channel();
        let transport = Arc::clone(&self.transport);
        std::thread::Builder::new()
            .name("llm-call".into())
            .spawn(move || {
                let _ = tx.send(transport.complete(&request));
            })
            .map_err(|e| TransportError::Http {
                status: None,
                message: format!("could not start request thread: {e}"),
            })?;
        match rx.recv_timeout(self.config.timeout()) {
            Ok(result) => result,
            Err(mpsc::RecvTimeoutError::Timeout) => Err(TransportError::TimedOut),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(TransportError::Http {
                status: None,
                message: "transport thread panicked".into(),
            }),
        }
    }
}

/// Cut `answer` to at most `max_chars` characters, ending at the last `。` or
/// `.` inside the limit. Without such a boundary the text is cut hard.
pub fn truncate_answer(answer: &str, max_chars: usize) -> String {
    if answer.chars().count() <= max_chars {
        return answer.to_string();
    }
    let head: String = answer.chars().take(max_chars).collect();
    match head.rfind(['。', '.']) {
        Some(i) => {
            let end = i + head[i..].chars().next().map_or(1, char::len_utf8);
            head[..end].to_string()
        }
        None => head,
    }
}
