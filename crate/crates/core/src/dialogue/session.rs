use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::flow::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub speaker: Speaker,
    pub text: String,
    pub timestamp_ms: u64,
}

/// Preferences collected during the conversation (`food`, `season`, ...).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserProfile {
    pub slots: BTreeMap<String, String>,
}

impl UserProfile {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.slots.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.slots.insert(key.into(), value.into());
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.slots.contains_key(key)
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for UserProfile {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self {
            slots: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

/// Live dialogue state. Owned by one caller at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub current_state: String,
    pub phase: Phase,
    pub profile: UserProfile,
    pub history: Vec<HistoryEntry>,
    pub turn_count: u32,
    pub ended: bool,
    /// Route ids of the last recommendation.
    pub recommended: Option<[String; 2]>,
    /// Sequence number the next emitted event will carry.
    pub next_seq: u64,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

impl Session {
    /// History alternates speakers starting with the system, and holds one
    /// user entry per consumed turn.
    pub fn check_history(&self) -> Result<(), String> {
        for (i, h) in self.history.iter().enumerate() {
            let expected = if i % 2 == 0 { Speaker::System } else { Speaker::User };
            if h.speaker != expected {
                return Err(format!("history entry {i} is from {:?}", h.speaker));
            }
        }
        let users = self.history.iter().filter(|h| h.speaker == Speaker::User).count();
        if users != self.turn_count as usize {
            return Err(format!("{users} user entries but turn_count {}", self.turn_count));
        }
        Ok(())
    }
}
