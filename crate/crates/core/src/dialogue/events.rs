use serde::{Deserialize, Serialize};

use crate::llm::LlmExchange;

/// One item of a turn's output, in delivery order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Utterance { text: String },
    Filler { text: String },
    ShowImage { image_id: String },
    RouteCards { route_ids: [String; 2], reasons: Vec<String> },
    End,
}

impl Event {
    pub fn utterance(text: impl Into<String>) -> Self {
        Event::Utterance { text: text.into() }
    }

    pub fn filler(text: impl Into<String>) -> Self {
        Event::Filler { text: text.into() }
    }

    pub fn image(image_id: impl Into<String>) -> Self {
        Event::ShowImage {
            image_id: image_id.into(),
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            Event::Utterance { text } | Event::Filler { text } => Some(text),
            _ => None,
        }
    }

    pub fn is_utterance(&self) -> bool {
        matches!(self, Event::Utterance { .. })
    }
}

/// Everything one call to `create_session` or `step` produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutput {
    /// Sequence number of `events[0]`; later events follow consecutively.
    pub first_seq: u64,
    pub events: Vec<Event>,
    pub from_state: Option<String>,
    pub to_state: String,
    /// Index of the fired transition within `from_state`.
    pub transition: Option<usize>,
    pub exchanges: Vec<LlmExchange>,
}

impl TurnOutput {
    pub fn sequenced(&self) -> impl Iterator<Item = (u64, &Event)> {
        self.events
            .iter()
            .enumerate()
            .map(move |(i, e)| (self.first_seq + i as u64, e))
    }

    pub fn ended(&self) -> bool {
        matches!(self.events.last(), Some(Event::End))
    }

    /// Concatenated spoken system text (utterances only).
    pub fn spoken_text(&self) -> String {
        self.events
            .iter()
            .filter(|e| e.is_utterance())
            .filter_map(Event::text)
            .collect::<Vec<_>>()
            .join("")
    }

    /// Checks the ordering contract: at most one `End` and only in last
    /// position, and each `Filler` is followed later by an `Utterance`.
    pub fn check_invariants(&self) -> Result<(), String> {
        let ends = self.events.iter().filter(|e| matches!(e, Event::End)).count();
        if ends > 1 {
            return Err("more than one End event".into());
        }
        if ends == 1 && !self.ended() {
            return Err("End is not the last event".into());
        }
        for (i, e) in self.events.iter().enumerate() {
            if matches!(e, Event::Filler { .. }) && !self.events[i + 1..].iter().any(Event::is_utterance) {
                return Err(format!("filler at {i} is not followed by an utterance"));
            }
        }
        Ok(())
    }
}

/// Receives events as soon as they are produced, with their sequence number.
pub trait EventSink {
    fn emit(&mut self, seq: u64, event: &Event);
}

impl<F: FnMut(u64, &Event)> EventSink for F {
    fn emit(&mut self, seq: u64, event: &Event) {
        self(seq, event)
    }
}

/// Sink that drops everything.
pub struct NoSink;

impl EventSink for NoSink {
    fn emit(&mut self, _seq: u64, _event: &Event) {}
}
