use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scripted user. Each rule answers once; when no unused rule matches the
/// current state, `default_reply` is used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub persona_id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub script: Vec<PersonaRule>,
    pub default_reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaRule {
    /// State id, or `*` for any state.
    #[serde(rename = "match")]
    pub match_state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    /// Alternatives; one is picked by the run seed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replies: Vec<String>,
}

impl PersonaRule {
    pub fn matches(&self, state: &str) -> bool {
        self.match_state == "*" || self.match_state == state
    }
}

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("invalid persona JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("persona `{persona}` rule {index} has neither `reply` nor `replies`")]
    EmptyRule { persona: String, index: usize },
    #[error("persona id must be non-empty")]
    EmptyId,
}

impl Persona {
    pub fn from_json(text: &str) -> Result<Self, PersonaError> {
        let persona: Persona = serde_json::from_str(text)?;
        persona.check()?;
        Ok(persona)
    }

    pub fn check(&self) -> Result<(), PersonaError> {
        if self.persona_id.trim().is_empty() {
            return Err(PersonaError::EmptyId);
        }
        for (index, rule) in self.script.iter().enumerate() {
            if rule.reply.is_none() && rule.replies.is_empty() {
                return Err(PersonaError::EmptyRule {
                    persona: self.persona_id.clone(),
                    index,
                });
            }
        }
        Ok(())
    }

    /// Same reply every time: `default_reply` with an empty script.
    pub fn constant(persona_id: impl Into<String>, reply: impl Into<String>) -> Self {
        Self {
            persona_id: persona_id.into(),
            description: String::new(),
            script: Vec::new(),
            default_reply: reply.into(),
        }
    }
}

/// Per-run reply state: which rules are used up, and the seeded RNG.
pub struct PersonaCursor<'p> {
    persona: &'p Persona,
    used: Vec<bool>,
    rng: ChaCha8Rng,
}

impl<'p> PersonaCursor<'p> {
    pub fn new(persona: &'p Persona, seed: u64) -> Self {
        Self {
            persona,
            used: vec![false; persona.script.len()],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn reply(&mut self, state: &str) -> String {
        let hit = self
            .persona
            .script
            .iter()
            .enumerate()
            .find(|(i, r)| !self.used[*i] && r.matches(state));
        let Some((i, rule)) = hit else {
            return self.persona.default_reply.clone();
        };
        self.used[i] = true;
        match (&rule.reply, rule.replies.choose(&mut self.rng)) {
            (_, Some(choice)) => choice.clone(),
            (Some(reply), None) => reply.clone(),
            (None, None) => self.persona.default_reply.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_are_consumed_in_order() {
        let p = Persona::from_json(
            r#"{"persona_id":"p","default_reply":"d","script":[
                {"match":"a","reply":"a1"},
                {"match":"*","reply":"any"},
                {"match":"a","reply":"a2"}
            ]}"#,
        )
        .unwrap();
        let mut c = PersonaCursor::new(&p, 0);
        assert_eq!(c.reply("a"), "a1");
        assert_eq!(c.reply("a"), "any");
        assert_eq!(c.reply("a"), "a2");
        assert_eq!(c.reply("a"), "d");
        assert_eq!(c.reply("b"), "d");
    }

    #[test]
    fn seeded_choice_is_reproducible() {
        let p = Persona::from_json(
            r#"{"persona_id":"p","default_reply":"d","script":[{"match":"*","replies":["x","y","z"]}]}"#,
        )
        .unwrap();
        let picks: Vec<String> = (0..20).map(|s| PersonaCursor::new(&p, s).reply("q")).collect();
        let again: Vec<String> = (0..20).map(|s| PersonaCursor::new(&p, s).reply("q")).collect();
        assert_eq!(picks, again);
        assert!(picks.iter().all(|r| ["x", "y", "z"].contains(&r.as_str())));
    }

    #[test]
    fn rejects_bad_personas() {
        assert!(Persona::from_json(r#"{"persona_id":"p","default_reply":"d","script":[{"match":"a"}]}"#).is_err());
        assert!(Persona::from_json(r#"{"persona_id":"","default_reply":"d"}"#).is_err());
        assert!(Persona::from_json(r#"{"persona_id":"p"}"#).is_err());
    }
}
