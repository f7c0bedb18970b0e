use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dialogue::{reason_sentence, Event, RouteCatalog};
use crate::flow::{placeholders, Action, FlowGraph};
use crate::llm::LlmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    /// State the user answered in; `None` for the opening turn.
    pub state: Option<String>,
    pub user_text: Option<String>,
    pub events: Vec<Event>,
}

impl TranscriptTurn {
    /// Characters the system speaks or shows as text in this turn.
    pub fn system_chars(&self) -> usize {
        self.events
            .iter()
            .map(|e| match e {
                Event::Utterance { text } | Event::Filler { text } => text.chars().count(),
                Event::RouteCards { reasons, .. } => reasons.iter().map(|r| r.chars().count()).sum(),
                Event::ShowImage { .. } | Event::End => 0,
            })
            .sum()
    }

    pub fn user_chars(&self) -> usize {
        self.user_text.as_deref().map_or(0, |t| t.chars().count())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub persona_id: String,
    pub transcript: Vec<TranscriptTurn>,
    /// User turns taken.
    pub turns: usize,
    pub estimated_duration_s: f64,
    pub visited_states: BTreeSet<String>,
    /// The last event of the run is `End`.
    pub ended_cleanly: bool,
    pub turn_cap_exceeded: bool,
    /// Engine error that stopped the run, if any.
    pub breakdown: Option<String>,
}

impl SimReport {
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.transcript.iter().flat_map(|t| t.events.iter())
    }

    pub fn route_cards(&self) -> Vec<&Event> {
        self.events().filter(|e| matches!(e, Event::RouteCards { .. })).collect()
    }

    /// Turns whose last utterance does not end in a question even though the
    /// dialogue continues after them.
    pub fn question_violations(&self) -> Vec<String> {
        let continuing = self.transcript.iter().filter(|t| !matches!(t.events.last(), Some(Event::End)));
        continuing
            .filter_map(|t| {
                let last = t.events.iter().rev().find_map(|e| match e {
                    Event::Utterance { text } => Some(text.as_str()),
                    _ => None,
                });
                match last {
                    Some(text) if crate::flow::ends_with_question(text) => None,
                    Some(text) => Some(text.to_string()),
                    None => Some(String::from("<no utterance>")),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeechRates {
    pub system_cps: f64,
    pub user_cps: f64,
    pub per_turn_latency_s: f64,
}

impl Default for SpeechRates {
    fn default() -> Self {
        Self {
            system_cps: 8.0,
            user_cps: 8.0,
            per_turn_latency_s: 1.5,
        }
    }
}

impl SpeechRates {
    pub fn turn_seconds(&self, system_chars: usize, user_chars: usize) -> f64 {
        system_chars as f64 / self.system_cps + user_chars as f64 / self.user_cps + self.per_turn_latency_s
    }
}

pub fn estimate_duration(transcript: &[TranscriptTurn], rates: SpeechRates) -> f64 {
    transcript
        .iter()
        .map(|t| rates.turn_seconds(t.system_chars(), t.user_chars()))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub state_coverage: f64,
    pub uncovered: BTreeSet<String>,
}

pub fn coverage_report(reports: &[SimReport], graph: &FlowGraph) -> Coverage {
    let visited: BTreeSet<&str> = reports
        .iter()
        .flat_map(|r| r.visited_states.iter().map(String::as_str))
        .collect();
    let uncovered: BTreeSet<String> = graph
        .states()
        .iter()
        .filter(|s| !visited.contains(s.id.as_str()))
        .map(|s| s.id.clone())
        .collect();
    let state_coverage = if graph.is_empty() {
        0.0
    } else {
        (graph.len() - uncovered.len()) as f64 / graph.len() as f64
    };
    Coverage {
        state_coverage,
        uncovered,
    }
}

/// Assumed sizes for text that is only known at runtime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalSizes {
    pub user_chars: usize,
    /// `{profile.*}` values; slots can hold a whole user utterance.
    pub placeholder_chars: usize,
    /// `{routeN.<field>}` values by field name.
    pub route_field_chars: BTreeMap<String, usize>,
    pub filler_chars: usize,
    pub llm_answer_chars: usize,
    pub reasons_chars: usize,
}

impl NominalSizes {
    /// Worst-case LLM, route and reason lengths for a given gateway config
    /// and catalog.
    pub fn for_config(llm: &LlmConfig, catalog: &RouteCatalog) -> Self {
        let fallback = llm.fallback_text.chars().count();
        let mut route_field_chars = BTreeMap::new();
        for r in catalog.routes() {
            let fields = [
                ("route_id", &r.route_id),
                ("name", &r.name),
                ("transport", &r.transport),
                ("description", &r.description),
                ("spot1", &r.spots[0]),
                ("spot2", &r.spots[1]),
            ];
            for (field, value) in fields {
                let n = value.chars().count();
                let e = route_field_chars.entry(field.to_string()).or_insert(0);
                *e = n.max(*e);
            }
        }
        let user_chars = 20;
        Self {
            user_chars,
            placeholder_chars: user_chars,
            route_field_chars,
            filler_chars: llm.filler_text.chars().count(),
            llm_answer_chars: llm.max_answer_chars.max(fallback),
            reasons_chars: max_reasons_chars(catalog),
        }
    }

    pub fn placeholder(&self, key: &str) -> usize {
        match key.split_once('.') {
            Some((head, field)) if head.starts_with("route") && head != "route" => {
                self.route_field_chars.get(field).copied().unwrap_or(self.placeholder_chars)
            }
            _ => self.placeholder_chars,
        }
    }
}

/// Longest possible reason text: every tag of the two routes with the most
/// reason text matches.
pub fn max_reasons_chars(catalog: &RouteCatalog) -> usize {
    let mut per_route: Vec<usize> = catalog
        .routes()
        .iter()
        .map(|r| r.tags.iter().map(|t| reason_sentence(t, r).chars().count()).sum())
        .collect();
    per_route.sort_unstable_by(|a, b| b.cmp(a));
    per_route.iter().take(2).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub seconds: f64,
    pub path: Vec<String>,
}

/// Longest-duration path through an acyclic flow from the initial state to a
/// terminal state. `None` if the graph has a cycle reachable from the start.
pub fn longest_path_duration(graph: &FlowGraph, rates: SpeechRates, sizes: &NominalSizes) -> Option<PathEstimate> {
    let initial = graph.state(graph.initial_state())?;
    let opening = rates.turn_seconds(entry_chars(graph, initial.id.as_str(), &[], sizes), 0);
    let mut memo: HashMap<String, Option<(f64, Vec<String>)>> = HashMap::new();
    let mut on_stack = BTreeSet::new();
    let (rest, mut tail) = longest_from(graph, &initial.id, rates, sizes, &mut memo, &mut on_stack)?;
    let mut path = vec![initial.id.clone()];
    path.append(&mut tail);
    Some(PathEstimate {
        seconds: opening + rest,
        path,
    })
}

fn longest_from(
    graph: &FlowGraph,
    id: &str,
    rates: SpeechRates,
    sizes: &NominalSizes,
    memo: &mut HashMap<String, Option<(f64, Vec<String>)>>,
    on_stack: &mut BTreeSet<String>,
) -> Option<(f64, Vec<String>)> {
    if let Some(done) = memo.get(id) {
        return done.clone();
    }
    if !on_stack.insert(id.to_string()) {
        return None;
    }
    let state = graph.state(id)?;
    let mut best: Option<(f64, Vec<String>)> = Some((0.0, Vec::new()));
    if !state.is_terminal() {
        best = None;
        for t in &state.transitions {
            let system = entry_chars(graph, &t.next_state, &t.actions, sizes);
            let turn = rates.turn_seconds(system, sizes.user_chars);
            let (rest, tail) = match longest_from(graph, &t.next_state, rates, sizes, memo, on_stack) {
                Some(r) => r,
                None => {
                    on_stack.remove(id);
                    memo.insert(id.to_string(), None);
                    return None;
                }
            };
            if best.as_ref().is_none_or(|(b, _)| turn + rest > *b) {
                let mut path = vec![t.next_state.clone()];
                path.extend(tail);
                best = Some((turn + rest, path));
            }
        }
    }
    on_stack.remove(id);
    memo.insert(id.to_string(), best.clone());
    best
}

/// System characters of a turn that fires `actions` and enters `target`.
fn entry_chars(graph: &FlowGraph, target: &str, actions: &[Action], sizes: &NominalSizes) -> usize {
    let Some(state) = graph.state(target) else { return 0 };
    let action_chars = |a: &Action| match a {
        Action::LlmAnswer => sizes.filler_chars + sizes.llm_answer_chars,
        Action::RecommendRoutes => sizes.reasons_chars,
        _ => 0,
    };
    let template = &state.utterance_template;
    let keys = placeholders(template).unwrap_or_default();
    let literal = template.chars().count() - keys.iter().map(|k| k.chars().count() + 2).sum::<usize>();
    actions.iter().chain(&state.entry_actions).map(action_chars).sum::<usize>()
        + literal
        + keys.iter().map(|k| sizes.placeholder(k)).sum::<usize>()
}
