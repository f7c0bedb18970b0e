use std::sync::Arc;

use thiserror::Error;
use uuid::Uuid;

use crate::flow::{
    render_template, validate_graph, Action, Builtin, ConditionExpr, Diagnostic, FlowGraph, Rule, SessionView,
    SlotValue, StateNode, TemplateError,
};
use crate::llm::{LlmExchange, LlmGateway, PromptContext};
use crate::nlu::{LocalUnderstander, NluResources, Understander, UnderstandingResult};

use super::events::{Event, EventSink, NoSink, TurnOutput};
use super::routes::{recommend_routes, CatalogError, RouteCatalog, TouristRoute};
use super::session::{HistoryEntry, Session, Speaker, UserProfile};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("flow failed validation with {} diagnostic(s)", .0.len())]
    InvalidGraph(Vec<Diagnostic>),
    #[error("flow references missing resources ({} diagnostic(s))", .0.len())]
    InvalidResources(Vec<Diagnostic>),
}

impl EngineError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            EngineError::InvalidGraph(d) | EngineError::InvalidResources(d) => d,
        }
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("session has ended")]
    SessionEnded,
    #[error("session is in unknown state `{0}`")]
    UnknownState(String),
    #[error("no transition fired in state `{0}`")]
    NoTransition(String),
    #[error("rendering state `{state}`: {source}")]
    Template {
        state: String,
        #[source]
        source: TemplateError,
    },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// Runs sessions over one compiled flow. Cheap to clone and safe to share
/// between threads; sessions are passed in by the caller.
#[derive(Clone)]
pub struct Engine {
    graph: Arc<FlowGraph>,
    understander: Arc<dyn Understander>,
    catalog: Arc<RouteCatalog>,
    llm: LlmGateway,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("states", &self.graph.len())
            .field("routes", &self.catalog.routes().len())
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// Validates the graph and checks that every keyword set, label and
    /// example intent it mentions exists in `resources`.
    pub fn new(
        graph: FlowGraph,
        resources: NluResources,
        catalog: RouteCatalog,
        llm: LlmGateway,
    ) -> Result<Self, EngineError> {
        let missing = check_resources(&graph, &resources);
        if !missing.is_empty() {
            return Err(EngineError::InvalidResources(missing));
        }
        Self::with_understander(graph, Arc::new(LocalUnderstander::new(resources)), catalog, llm)
    }

    pub fn with_understander(
        graph: FlowGraph,
        understander: Arc<dyn Understander>,
        catalog: RouteCatalog,
        llm: LlmGateway,
    ) -> Result<Self, EngineError> {
        let diags = validate_graph(&graph);
        if !diags.is_empty() {
            return Err(EngineError::InvalidGraph(diags));
        }
        Ok(Self {
            graph: Arc::new(graph),
            understander,
            catalog: Arc::new(catalog),
            llm,
        })
    }

    /// Same flow and understanding, different gateway (used for replay).
    pub fn with_llm(&self, llm: LlmGateway) -> Self {
        Self { llm, ..self.clone() }
    }

    pub fn graph(&self) -> &FlowGraph {
        &self.graph
    }

    pub fn catalog(&self) -> &RouteCatalog {
        &self.catalog
    }

    pub fn llm(&self) -> &LlmGateway {
        &self.llm
    }

    pub fn understand(&self, text: &str) -> UnderstandingResult {
        self.understander.understand(text)
    }

    pub fn create_session(&self, now_ms: u64) -> Result<(Session, TurnOutput), StepError> {
        self.create_session_with_id(Uuid::new_v4().to_string(), now_ms, &mut NoSink)
    }

    pub fn create_session_with_id(
        &self,
        session_id: impl Into<String>,
        now_ms: u64,
        sink: &mut dyn EventSink,
    ) -> Result<(Session, TurnOutput), StepError> {
        let initial = self.state(self.graph.initial_state())?;
        let mut session = Session {
            session_id: session_id.into(),
            current_state: initial.id.clone(),
            phase: initial.phase,
            profile: UserProfile::default(),
            history: Vec::new(),
            turn_count: 0,
            ended: false,
            recommended: None,
            next_seq: 0,
            created_at_ms: now_ms,
            updated_at_ms: now_ms,
        };
        let mut out = Emitter::new(0, sink);
        let mut exchanges = Vec::new();
        let u = UnderstandingResult::empty();
        self.run_actions(&mut session, &initial.entry_actions, &u, &mut out, &mut exchanges)?;
        let text = self.render(initial, &session)?;
        out.push(Event::utterance(text));
        if initial.is_terminal() {
            out.push(Event::End);
            session.ended = true;
        }
        let output = out.finish(None, initial.id.clone(), None, exchanges);
        session.next_seq = output.first_seq + output.events.len() as u64;
        session.history.push(HistoryEntry {
            speaker: Speaker::System,
            text: output.spoken_text(),
            timestamp_ms: now_ms,
        });
        Ok((session, output))
    }

    /// Consume one user utterance. `session` is only modified when the turn
    /// succeeds; events reach `sink` as they are produced.
    pub fn step(
        &self,
        session: &mut Session,
        user_text: &str,
        now_ms: u64,
        sink: &mut dyn EventSink,
    ) -> Result<TurnOutput, StepError> {
        if session.ended {
            return Err(StepError::SessionEnded);
        }
        let mut work = session.clone();
        let from = self.state(&work.current_state)?;
        let u = self.understand(user_text);
        let index = from
            .transitions
            .iter()
            .position(|t| evaluate_condition(&t.condition, &u, &work.profile))
            .ok_or_else(|| StepError::NoTransition(from.id.clone()))?;
        let transition = &from.transitions[index];

        let mut out = Emitter::new(work.next_seq, sink);
        let mut exchanges = Vec::new();
        let end_requested = transition.actions.contains(&Action::EndDialogue);
        self.run_actions(&mut work, &transition.actions, &u, &mut out, &mut exchanges)?;

        let to = self.state(&transition.next_state)?;
        work.current_state = to.id.clone();
        work.phase = to.phase;
        self.run_actions(&mut work, &to.entry_actions, &u, &mut out, &mut exchanges)?;
        let text = self.render(to, &work)?;
        out.push(Event::utterance(text));
        if to.is_terminal() || end_requested {
            out.push(Event::End);
            work.ended = true;
        }

        let output = out.finish(Some(from.id.clone()), to.id.clone(), Some(index), exchanges);
        work.next_seq = output.first_seq + output.events.len() as u64;
        work.history.push(HistoryEntry {
            speaker: Speaker::User,
            text: user_text.to_string(),
            timestamp_ms: now_ms,
        });
        work.history.push(HistoryEntry {
            speaker: Speaker::System,
            text: output.spoken_text(),
            timestamp_ms: now_ms,
        });
        work.turn_count += 1;
        work.updated_at_ms = now_ms;
        *session = work;
        Ok(output)
    }

    /// Apply `actions` outside a turn and return the events they produce.
    /// `end()` yields a trailing `End` and marks the session ended.
    pub fn apply_actions(
        &self,
        session: &mut Session,
        actions: &[Action],
        u: &UnderstandingResult,
    ) -> Result<(Vec<Event>, Vec<LlmExchange>), StepError> {
        let mut sink = NoSink;
        let mut out = Emitter::new(session.next_seq, &mut sink);
        let mut exchanges = Vec::new();
        self.run_actions(session, actions, u, &mut out, &mut exchanges)?;
        if actions.contains(&Action::EndDialogue) {
            out.push(Event::End);
            session.ended = true;
        }
        session.next_seq = out.next_seq;
        Ok((out.events, exchanges))
    }

    fn run_actions(
        &self,
        session: &mut Session,
        actions: &[Action],
        u: &UnderstandingResult,
        out: &mut Emitter<'_>,
        exchanges: &mut Vec<LlmExchange>,
    ) -> Result<(), StepError> {
        for action in actions {
            match action {
                Action::Set { key, value } => {
                    let value = match value {
                        SlotValue::Literal(v) => v.clone(),
                        SlotValue::Utterance => u.raw_text.clone(),
                    };
                    session.profile.set(key.clone(), value);
                }
                Action::ShowImage(id) => out.push(Event::image(id.clone())),
                Action::LlmAnswer => {
                    let routes = self.recommended_routes(session);
                    let ctx = PromptContext {
                        routes,
                        history: &session.history,
                    };
                    let reply = self
                        .llm
                        .answer_question(&u.raw_text, &ctx, &mut |e| out.push(e.clone()));
                    let spoken = reply.exchange.spoken_text(self.llm.config()).to_string();
                    out.push(Event::utterance(spoken));
                    exchanges.push(reply.exchange);
                }
                Action::RecommendRoutes => {
                    let rec = recommend_routes(&session.profile, self.catalog.routes())?;
                    let ids = [rec.first.route_id.clone(), rec.second.route_id.clone()];
                    session.recommended = Some(ids.clone());
                    out.push(Event::RouteCards {
                        route_ids: ids,
                        reasons: rec.reasons,
                    });
                }
                // Deferred: End must be the last event of the turn.
                Action::EndDialogue => {}
            }
        }
        Ok(())
    }

    fn state(&self, id: &str) -> Result<&StateNode, StepError> {
        self.graph.state(id).ok_or_else(|| StepError::UnknownState(id.to_string()))
    }

    fn recommended_routes(&self, session: &Session) -> Vec<&TouristRoute> {
        session
            .recommended
            .iter()
            .flatten()
            .filter_map(|id| self.catalog.get(id))
            .collect()
    }

    fn render(&self, state: &StateNode, session: &Session) -> Result<String, StepError> {
        render_template(&state.utterance_template, &self.view(session)).map_err(|source| StepError::Template {
            state: state.id.clone(),
            source,
        })
    }

    /// Template view of a session: `profile.<slot>` plus `route1.*`/`route2.*`.
    pub fn view(&self, session: &Session) -> SessionView {
        let mut view = SessionView::new();
        for (k, v) in &session.profile.slots {
            view.insert(format!("profile.{k}"), v.clone());
        }
        for (i, r) in self.recommended_routes(session).into_iter().enumerate() {
            let p = format!("route{}", i + 1);
            view.insert(format!("{p}.route_id"), r.route_id.clone());
            view.insert(format!("{p}.name"), r.name.clone());
            view.insert(format!("{p}.transport"), r.transport.clone());
            view.insert(format!("{p}.description"), r.description.clone());
            view.insert(format!("{p}.spot1"), r.spots[0].clone());
            view.insert(format!("{p}.spot2"), r.spots[1].clone());
        }
        view
    }
}

struct Emitter<'s> {
    first_seq: u64,
    next_seq: u64,
    events: Vec<Event>,
    sink: &'s mut dyn EventSink,
}

impl<'s> Emitter<'s> {
    fn new(first_seq: u64, sink: &'s mut dyn EventSink) -> Self {
        Self {
            first_seq,
            next_seq: first_seq,
            events: Vec::new(),
            sink,
        }
    }

    fn push(&mut self, event: Event) {
        self.sink.emit(self.next_seq, &event);
        self.next_seq += 1;
        self.events.push(event);
    }

    fn finish(
        self,
        from_state: Option<String>,
        to_state: String,
        transition: Option<usize>,
        exchanges: Vec<LlmExchange>,
    ) -> TurnOutput {
        TurnOutput {
            first_seq: self.first_seq,
            events: self.events,
            from_state,
            to_state,
            transition,
            exchanges,
        }
    }
}

pub fn evaluate_condition(expr: &ConditionExpr, u: &UnderstandingResult, profile: &UserProfile) -> bool {
    match expr {
        ConditionExpr::Default => true,
        ConditionExpr::Or(c) => c.iter().any(|e| evaluate_condition(e, u, profile)),
        ConditionExpr::And(c) => c.iter().all(|e| evaluate_condition(e, u, profile)),
        ConditionExpr::Not(e) => !evaluate_condition(e, u, profile),
        ConditionExpr::Call(call) => {
            let arg = |i: usize| call.args.get(i).map(String::as_str);
            match call.func {
                Builtin::Keyword => arg(0).is_some_and(|s| u.matched_keyword_sets.contains(s)),
                Builtin::Label => arg(0).is_some_and(|l| u.matched_labels.contains(l)),
                Builtin::Sentiment => arg(0) == Some(u.sentiment.polarity.as_str()),
                Builtin::Example => match (&u.example, arg(0)) {
                    (Some(m), Some(intent)) if m.intent_id == intent => match arg(1) {
                        Some(t) => t.parse::<f64>().is_ok_and(|t| m.similarity >= t),
                        None => true,
                    },
                    _ => false,
                },
                Builtin::Profile => match (arg(0), arg(1)) {
                    (Some(k), None) => profile.is_set(k),
                    (Some(k), Some(v)) => profile.get(k) == Some(v),
                    _ => false,
                },
                Builtin::IsQuestion => u.is_question,
            }
        }
    }
}

/// First candidate whose profile slot is still empty, else the first one.
pub fn select_topic<'a>(profile: &UserProfile, candidates: &[&'a str]) -> Option<&'a str> {
    candidates
        .iter()
        .find(|c| !profile.is_set(c))
        .or_else(|| candidates.first())
        .copied()
}

/// Keyword sets, labels and example intents the flow mentions but the
/// resources do not define. Such conditions could never hold.
pub fn check_resources(graph: &FlowGraph, resources: &NluResources) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for state in graph.states() {
        for t in &state.transitions {
            for call in t.condition.calls() {
                let Some(arg) = call.args.first() else { continue };
                let missing = match call.func {
                    Builtin::Keyword => resources.keyword_set(arg).is_none(),
                    Builtin::Label => !resources.has_label(arg),
                    Builtin::Example => !resources.has_intent(arg),
                    _ => false,
                };
                if missing {
                    out.push(
                        Diagnostic::new(
                            Rule::UnknownResource,
                            Some(&state.id),
                            format!("{}({arg}) refers to an undefined resource", call.func.name()),
                        )
                        .at_line(t.line),
                    );
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::RouteTag;
    use crate::flow::{parse_condition, Phase, Transition};
    use crate::llm::{LlmConfig, ScriptedTransport};
    use crate::nlu::{KeywordSpec, Polarity, SentimentOverrides};
    use std::time::Duration;

    fn resources() -> NluResources {
        NluResources {
            keyword_specs: vec![KeywordSpec::new("yes_words", ["はい", "うん"])],
            overrides: SentimentOverrides {
                negative: KeywordSpec::new("negative_override", ["結構です"]),
                positive: KeywordSpec::new("positive_override", ["はい"]),
            },
            ..NluResources::default()
        }
    }

    fn catalog() -> RouteCatalog {
        let r = |id: &str, tag: Option<(&str, &str)>| TouristRoute {
            route_id: id.into(),
            name: format!("{id}コース"),
            spots: ["A寺".into(), "B神社".into()],
            transport: "バス".into(),
            tags: tag
                .map(|(k, v)| RouteTag {
                    key: k.into(),
                    value: v.into(),
                })
                .into_iter()
                .collect(),
            description: String::new(),
        };
        RouteCatalog::new(vec![
            r("r1", None),
            r("r2", None),
            r("r3", Some(("food", "ラーメン"))),
            r("r4", None),
        ])
        .unwrap()
    }

    fn gateway(delay_ms: u64) -> LlmGateway {
        LlmGateway::new(
            LlmConfig::default(),
            Arc::new(ScriptedTransport::answering("はい、あります").with_delay(Duration::from_millis(delay_ms))),
        )
    }

    fn cond(s: &str) -> ConditionExpr {
        parse_condition(s).unwrap()
    }

    fn yes_no_graph() -> FlowGraph {
        FlowGraph::new(vec![
            StateNode::new("s0", Phase::IceBreak, "京都は好きですか？")
                .with_transition(Transition::new(cond("sentiment(positive)"), vec![], "s_yes"))
                .with_transition(Transition::new(ConditionExpr::Default, vec![], "s_no")),
            StateNode::new("s_yes", Phase::IceBreak, "よかったです。"),
            StateNode::new("s_no", Phase::IceBreak, "そうですか。"),
        ])
    }

    fn engine(graph: FlowGraph) -> Engine {
        Engine::new(graph, resources(), catalog(), gateway(5)).unwrap()
    }

    #[test]
    fn positive_override_moves_to_yes() {
        let e = engine(yes_no_graph());
        let (mut s, first) = e.create_session(0).unwrap();
        assert_eq!(first.events, vec![Event::utterance("京都は好きですか？")]);
        let out = e.step(&mut s, "はい、好きです", 1, &mut NoSink).unwrap();
        assert_eq!(out.to_state, "s_yes");
        assert_eq!(e.understand("はい、好きです").sentiment.polarity, Polarity::Positive);
        assert!(out.ended());
        assert!(s.ended);
        assert!(matches!(e.step(&mut s, "x", 2, &mut NoSink), Err(StepError::SessionEnded)));
    }

    #[test]
    fn empty_input_takes_default() {
        let e = engine(yes_no_graph());
        let (mut s, _) = e.create_session(0).unwrap();
        assert_eq!(e.step(&mut s, "", 1, &mut NoSink).unwrap().to_state, "s_no");
        assert_eq!(s.turn_count, 1);
        s.check_history().unwrap();
    }

    #[test]
    fn llm_turn_emits_filler_first() {
        let graph = FlowGraph::new(vec![
            StateNode::new("qa", Phase::Recommend, "質問はありますか？")
                .with_transition(Transition::new(cond("is_question()"), vec![Action::LlmAnswer], "qa"))
                .with_transition(Transition::new(ConditionExpr::Default, vec![], "bye")),
            StateNode::new("bye", Phase::Recommend, "ありがとうございました。"),
        ]);
        let e = engine(graph);
        let (mut s, _) = e.create_session(0).unwrap();
        let mut seen = Vec::new();
        let out = e
            .step(&mut s, "お祭りはありますか？", 1, &mut |seq: u64, ev: &Event| seen.push((seq, ev.clone())))
            .unwrap();
        assert_eq!(
            out.events,
            vec![
                Event::filler("少々お待ちください"),
                Event::utterance("はい、あります"),
                Event::utterance("質問はありますか？"),
            ]
        );
        assert_eq!(seen.iter().map(|(s, _)| *s).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(out.exchanges.len(), 1);
        assert_eq!(s.next_seq, 4);
        out.check_invariants().unwrap();
    }

    #[test]
    fn evaluate_truth_table() {
        let mut u = UnderstandingResult::empty();
        let profile = UserProfile::default();
        let both = cond("sentiment(positive) & keyword(yes_words)");
        assert!(evaluate_condition(&ConditionExpr::Default, &u, &profile));
        assert!(!evaluate_condition(&both, &u, &profile));
        u.sentiment.polarity = Polarity::Positive;
        assert!(!evaluate_condition(&both, &u, &profile));
        u.matched_keyword_sets.insert("yes_words".into());
        assert!(evaluate_condition(&both, &u, &profile));
        u.example = Some(crate::nlu::ExampleMatch {
            intent_id: "quiz".into(),
            similarity: 0.7,
        });
        assert!(evaluate_condition(&cond("example(quiz)"), &u, &profile));
        assert!(evaluate_condition(&cond("example(quiz, 0.7)"), &u, &profile));
        assert!(!evaluate_condition(&cond("example(quiz, 0.8)"), &u, &profile));
        assert!(!evaluate_condition(&cond("example(other)"), &u, &profile));
    }

    #[test]
    fn set_utterance_then_profile_condition() {
        let e = engine(yes_no_graph());
        let (mut s, _) = e.create_session(0).unwrap();
        let mut u = UnderstandingResult::empty();
        u.raw_text = "ラーメン".into();
        let set = Action::Set {
            key: "food".into(),
            value: SlotValue::Utterance,
        };
        let (events, _) = e.apply_actions(&mut s, &[set], &u).unwrap();
        assert!(events.is_empty());
        assert!(evaluate_condition(&cond("profile(food, ラーメン)"), &u, &s.profile));
        assert!(evaluate_condition(&cond("profile(food)"), &u, &s.profile));
        assert!(!evaluate_condition(&cond("profile(food, 寿司)"), &u, &s.profile));

        let (events, _) = e.apply_actions(&mut s, &[Action::RecommendRoutes], &u).unwrap();
        match &events[..] {
            [Event::RouteCards { route_ids, reasons }] => {
                assert_eq!(route_ids[0], "r3");
                assert_ne!(route_ids[0], route_ids[1]);
                assert!(reasons[0].contains("ラーメン"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let (events, _) = e.apply_actions(&mut s, &[Action::EndDialogue], &u).unwrap();
        assert_eq!(events, vec![Event::End]);
        assert!(s.ended);
    }

    #[test]
    fn select_topic_rules() {
        let mut p = UserProfile::default();
        assert_eq!(select_topic(&p, &["food", "season"]), Some("food"));
        p.set("food", "寿司");
        assert_eq!(select_topic(&p, &["food", "season"]), Some("season"));
        p.set("season", "秋");
        assert_eq!(select_topic(&p, &["food", "season"]), Some("food"));
        assert_eq!(select_topic(&p, &[]), None);
    }

    #[test]
    fn rejects_invalid_graph_and_missing_resources() {
        let bad = FlowGraph::new(vec![StateNode::new("s0", Phase::IceBreak, "何？")
            .with_transition(Transition::new(cond("keyword(a)"), vec![], "s0"))]);
        assert!(matches!(
            Engine::new(bad, NluResources::default(), catalog(), gateway(0)),
            Err(EngineError::InvalidResources(_))
        ));
        let bad = FlowGraph::new(vec![StateNode::new("s0", Phase::IceBreak, "何？")
            .with_transition(Transition::new(cond("sentiment(positive)"), vec![], "s0"))]);
        match Engine::new(bad, NluResources::default(), catalog(), gateway(0)) {
            Err(EngineError::InvalidGraph(d)) => assert_eq!(d[0].rule, Rule::MissingDefault),
            _ => panic!("expected InvalidGraph"),
        }
    }

    #[test]
    fn failed_step_leaves_session_untouched() {
        let graph = FlowGraph::new(vec![
            StateNode::new("s0", Phase::IceBreak, "どうぞ？")
                .with_transition(Transition::new(ConditionExpr::Default, vec![], "s1")),
            StateNode::new("s1", Phase::IceBreak, "終わり。"),
        ]);
        let e = engine(graph);
        let (mut s, _) = e.create_session(0).unwrap();
        s.current_state = "gone".into();
        let before = s.clone();
        assert!(matches!(e.step(&mut s, "x", 1, &mut NoSink), Err(StepError::UnknownState(_))));
        assert_eq!(s, before);
    }
}
