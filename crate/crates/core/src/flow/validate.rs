//! Static lints over a compiled flow. A flow that passes every rule cannot
//! get stuck at runtime: each non-terminal state has a reachable default, all
//! targets exist and every placeholder is bound on every path into its state.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::Serialize;

use super::{placeholders, Action, FlowGraph, StateNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    MalformedRow,
    BadPhase,
    PhaseConflict,
    ConditionSyntax,
    ActionSyntax,
    DuplicateUtterance,
    MissingUtterance,
    EmptyFlow,
    UnknownState,
    MissingDefault,
    ShadowedTransitions,
    UnreachableState,
    PhaseRegression,
    TemplateSyntax,
    UnboundPlaceholder,
    EndToNonTerminal,
    MissingQuestion,
    UnknownResource,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::MalformedRow => "malformed_row",
            Rule::BadPhase => "bad_phase",
            Rule::PhaseConflict => "phase_conflict",
            Rule::ConditionSyntax => "condition_syntax",
            Rule::ActionSyntax => "action_syntax",
            Rule::DuplicateUtterance => "duplicate_utterance",
            Rule::MissingUtterance => "missing_utterance",
            Rule::EmptyFlow => "empty_flow",
            Rule::UnknownState => "unknown_state",
            Rule::MissingDefault => "missing_default",
            Rule::ShadowedTransitions => "shadowed_transitions",
            Rule::UnreachableState => "unreachable_state",
            Rule::PhaseRegression => "phase_regression",
            Rule::TemplateSyntax => "template_syntax",
            Rule::UnboundPlaceholder => "unbound_placeholder",
            Rule::EndToNonTerminal => "end_to_non_terminal",
            Rule::MissingQuestion => "missing_question",
            Rule::UnknownResource => "unknown_resource",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub rule: Rule,
    pub state: Option<String>,
    /// 1-based sheet line when known.
    pub line: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(rule: Rule, state: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            rule,
            state: state.map(str::to_string),
            line: None,
            message: message.into(),
        }
    }

    pub fn at_line(mut self, line: usize) -> Self {
        if line > 0 {
            self.line = Some(line);
        }
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        write!(f, "[{}]", self.rule)?;
        if let Some(state) = &self.state {
            write!(f, " state `{state}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    /// Every non-terminal utterance must end with `？` or `?`.
    pub strict_question_lint: bool,
}

pub fn validate_graph(graph: &FlowGraph) -> Vec<Diagnostic> {
    validate_graph_with(graph, ValidateOptions::default())
}

pub fn validate_graph_with(graph: &FlowGraph, options: ValidateOptions) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if graph.is_empty() {
        out.push(Diagnostic::new(Rule::EmptyFlow, None, "flow has no states"));
        return out;
    }
    if !graph.contains(graph.initial_state()) {
        out.push(Diagnostic::new(
            Rule::UnknownState,
            None,
            format!("initial state `{}` does not exist", graph.initial_state()),
        ));
        return out;
    }

    for state in graph.states() {
        check_state(graph, state, options, &mut out);
    }

    let reachable = reachable_from_initial(graph);
    for state in graph.states() {
        if !reachable.contains(state.id.as_str()) {
            out.push(Diagnostic::new(
                Rule::UnreachableState,
                Some(&state.id),
                "not reachable from the initial state",
            ));
        }
    }

    check_placeholder_binding(graph, &reachable, &mut out);
    out
}

fn check_state(graph: &FlowGraph, state: &StateNode, options: ValidateOptions, out: &mut Vec<Diagnostic>) {
    let id = Some(state.id.as_str());
    if state.utterance_template.trim().is_empty() {
        out.push(Diagnostic::new(Rule::MissingUtterance, id, "state has no utterance"));
    }
    if let Err(e) = placeholders(&state.utterance_template) {
        out.push(Diagnostic::new(Rule::TemplateSyntax, id, e.to_string()));
    }

    for t in &state.transitions {
        match graph.state(&t.next_state) {
            None => out.push(
                Diagnostic::new(
                    Rule::UnknownState,
                    id,
                    format!("transition targets unknown state `{}`", t.next_state),
                )
                .at_line(t.line),
            ),
            Some(next) => {
                if next.phase < state.phase {
                    out.push(
                        Diagnostic::new(
                            Rule::PhaseRegression,
                            id,
                            format!(
                                "transition to `{}` goes back from {} to {}",
                                next.id, state.phase, next.phase
                            ),
                        )
                        .at_line(t.line),
                    );
                }
                if t.actions.contains(&Action::EndDialogue) && !next.is_terminal() {
                    out.push(
                        Diagnostic::new(
                            Rule::EndToNonTerminal,
                            id,
                            format!("end() leads to non-terminal state `{}`", next.id),
                        )
                        .at_line(t.line),
                    );
                }
            }
        }
    }
    if state.entry_actions.contains(&Action::EndDialogue) && !state.is_terminal() {
        out.push(Diagnostic::new(
            Rule::EndToNonTerminal,
            id,
            "end() as an entry action of a non-terminal state",
        ));
    }

    if !state.is_terminal() {
        match state.transitions.iter().position(|t| t.condition.is_default()) {
            None => out.push(Diagnostic::new(
                Rule::MissingDefault,
                id,
                "non-terminal state has no default transition",
            )),
            Some(pos) if pos + 1 != state.transitions.len() => out.push(Diagnostic::new(
                Rule::ShadowedTransitions,
                id,
                format!(
                    "default is transition {} of {}; later transitions can never fire",
                    pos + 1,
                    state.transitions.len()
                ),
            )),
            Some(_) => {}
        }
        if options.strict_question_lint && !ends_with_question(&state.utterance_template) {
            out.push(Diagnostic::new(
                Rule::MissingQuestion,
                id,
                "non-terminal utterance must end with a question (？ or ?)",
            ));
        }
    }
}

pub fn ends_with_question(text: &str) -> bool {
    let trimmed = text.trim_end();
    trimmed.ends_with('？') || trimmed.ends_with('?')
}

fn reachable_from_initial(graph: &FlowGraph) -> BTreeSet<&str> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([graph.initial_state()]);
    while let Some(id) = queue.pop_front() {
        let Some(state) = graph.state(id) else { continue };
        if !seen.insert(state.id.as_str()) {
            continue;
        }
        for t in &state.transitions {
            queue.push_back(t.next_state.as_str());
        }
    }
    seen
}

const ROUTE_FIELDS: [&str; 6] = ["route_id", "name", "transport", "description", "spot1", "spot2"];
const ROUTES_FACT: &str = "$routes";

fn facts_from_actions(actions: &[Action], into: &mut BTreeSet<String>) {
    for a in actions {
        match a {
            Action::Set { key, .. } => {
                into.insert(format!("profile.{key}"));
            }
            Action::RecommendRoutes => {
                into.insert(ROUTES_FACT.to_string());
            }
            _ => {}
        }
    }
}

/// Must-analysis: a fact holds at a state iff it holds on every path from
/// the initial state into it. Facts are `profile.<key>` and route presence.
fn check_placeholder_binding(graph: &FlowGraph, reachable: &BTreeSet<&str>, out: &mut Vec<Diagnostic>) {
    // None = top (not yet constrained by any incoming edge).
    let mut at: HashMap<&str, Option<BTreeSet<String>>> =
        graph.states().iter().map(|s| (s.id.as_str(), None)).collect();

    let entry_facts = |s: &StateNode| {
        let mut f = BTreeSet::new();
        facts_from_actions(&s.entry_actions, &mut f);
        f
    };

    let initial = graph.initial_state();
    at.insert(initial, Some(entry_facts(graph.state(initial).unwrap())));

    let mut work: VecDeque<&str> = VecDeque::from([initial]);
    while let Some(id) = work.pop_front() {
        let state = graph.state(id).unwrap();
        let Some(current) = at.get(id).cloned().flatten() else { continue };
        for t in &state.transitions {
            let Some(next) = graph.state(&t.next_state) else { continue };
            let mut incoming = current.clone();
            facts_from_actions(&t.actions, &mut incoming);
            for key in t.condition.implied_profile_keys() {
                incoming.insert(format!("profile.{key}"));
            }
            incoming.extend(entry_facts(next));
            let slot = at.get_mut(next.id.as_str()).unwrap();
            let updated = match slot {
                None => Some(incoming),
                Some(existing) if next.id.as_str() != initial => {
                    let meet: BTreeSet<String> = existing.intersection(&incoming).cloned().collect();
                    if &meet == existing {
                        None
                    } else {
                        Some(meet)
                    }
                }
                Some(_) => None,
            };
            if let Some(facts) = updated {
                *slot = Some(facts);
                work.push_back(next.id.as_str());
            }
        }
    }

    for state in graph.states() {
        if !reachable.contains(state.id.as_str()) {
            continue;
        }
        let Ok(keys) = placeholders(&state.utterance_template) else { continue };
        let facts = at.get(state.id.as_str()).cloned().flatten().unwrap_or_default();
        for key in keys {
            let problem = if let Some(slot) = key.strip_prefix("profile.") {
                (!facts.contains(&format!("profile.{slot}")))
                    .then(|| format!("`{{{key}}}` may be unset when `{}` is entered", state.id))
            } else if let Some(field) = key.strip_prefix("route1.").or_else(|| key.strip_prefix("route2.")) {
                if !ROUTE_FIELDS.contains(&field) {
                    Some(format!("`{{{key}}}` is not a route field"))
                } else if !facts.contains(ROUTES_FACT) {
                    Some(format!(
                        "`{{{key}}}` used before routes are recommended on some path into `{}`",
                        state.id
                    ))
                } else {
                    None
                }
            } else {
                Some(format!("`{{{key}}}` is not a profile or route placeholder"))
            };
            if let Some(message) = problem {
                out.push(Diagnostic::new(Rule::UnboundPlaceholder, Some(&state.id), message));
            }
        }
    }
}
