//! Flow sheets and the compiled state machine they describe.

mod action;
mod condition;
mod sheet;
mod template;
mod validate;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use action::{parse_actions, Action, ActionError, SlotValue};
pub use condition::{is_slot_key, parse_condition, Builtin, Call, ConditionError, ConditionExpr};
pub use sheet::{parse_flow_sheet, FlowSheet, SheetRow};
pub use template::{placeholders, render_template, SessionView, TemplateError};
pub use validate::{ends_with_question, validate_graph, validate_graph_with, Diagnostic, Rule, ValidateOptions};

/// Dialogue phase. Ordering follows the conversation: ice break first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    IceBreak,
    Sightseeing,
    Recommend,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::IceBreak, Phase::Sightseeing, Phase::Recommend];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::IceBreak => "ice_break",
            Phase::Sightseeing => "sightseeing",
            Phase::Recommend => "recommend",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ice_break" => Ok(Phase::IceBreak),
            "sightseeing" => Ok(Phase::Sightseeing),
            "recommend" => Ok(Phase::Recommend),
            other => Err(format!("unknown phase `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub condition: ConditionExpr,
    pub actions: Vec<Action>,
    pub next_state: String,
    /// 1-based sheet line, 0 when built in code.
    pub line: usize,
}

impl Transition {
    pub fn new(condition: ConditionExpr, actions: Vec<Action>, next_state: impl Into<String>) -> Self {
        Self {
            condition,
            actions,
            next_state: next_state.into(),
            line: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateNode {
    pub id: String,
    pub phase: Phase,
    pub utterance_template: String,
    /// Actions run whenever the state is entered, before its utterance.
    pub entry_actions: Vec<Action>,
    /// Ordered by priority: the first transition whose condition holds fires.
    pub transitions: Vec<Transition>,
}

impl StateNode {
    pub fn new(id: impl Into<String>, phase: Phase, utterance_template: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            phase,
            utterance_template: utterance_template.into(),
            entry_actions: Vec::new(),
            transitions: Vec::new(),
        }
    }

    pub fn with_entry(mut self, actions: Vec<Action>) -> Self {
        self.entry_actions = actions;
        self
    }

    pub fn with_transition(mut self, transition: Transition) -> Self {
        self.transitions.push(transition);
        self
    }

    pub fn is_terminal(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Compiled state machine. States keep their sheet order; the first state is
/// the initial one unless set otherwise.
///
/// Construction does not validate; run [`validate_graph`] (or compile through
/// [`parse_flow_sheet`]) before executing a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    states: Vec<StateNode>,
    index: HashMap<String, usize>,
    initial_state: String,
}

impl FlowGraph {
    pub fn new(states: Vec<StateNode>) -> Self {
        let initial = states.first().map(|s| s.id.clone()).unwrap_or_default();
        Self::with_initial(states, initial)
    }

    pub fn with_initial(states: Vec<StateNode>, initial_state: impl Into<String>) -> Self {
        let mut index = HashMap::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            index.entry(s.id.clone()).or_insert(i);
        }
        Self {
            states,
            index,
            initial_state: initial_state.into(),
        }
    }

    pub fn initial_state(&self) -> &str {
        &self.initial_state
    }

    pub fn state(&self, id: &str) -> Option<&StateNode> {
        self.index.get(id).map(|&i| &self.states[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn states(&self) -> &[StateNode] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = &str> {
        self.states
            .iter()
            .filter(|s| s.is_terminal())
            .map(|s| s.id.as_str())
    }

    pub fn phases(&self) -> Vec<Phase> {
        let mut phases: Vec<Phase> = self.states.iter().map(|s| s.phase).collect();
        phases.sort();
        phases.dedup();
        phases
    }

    /// Successor ids of a state, in transition order, duplicates kept.
    pub fn successors<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a str> + 'a {
        self.state(id)
            .into_iter()
            .flat_map(|s| s.transitions.iter().map(|t| t.next_state.as_str()))
    }
}
