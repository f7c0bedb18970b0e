//! Batch runs of scripted personas against a flow, with duration, coverage
//! and breakdown metrics.

mod junit;
mod persona;
mod report;

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::dialogue::{Engine, NoSink};
use crate::llm::{LlmConfig, LlmGateway, ScriptedTransport};

pub use junit::junit_xml;
pub use persona::{Persona, PersonaCursor, PersonaError, PersonaRule};
pub use report::{
    coverage_report, estimate_duration, longest_path_duration, max_reasons_chars, Coverage, NominalSizes,
    PathEstimate, SimReport, SpeechRates, TranscriptTurn,
};

/// Canned answer of the offline gateway used by simulations.
pub const STUB_ANSWER: &str = "はい、大丈夫です。詳しいことは現地の観光案内所でも教えてもらえますよ。";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub turn_cap: usize,
    pub seed: u64,
    pub rates: SpeechRates,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            turn_cap: 100,
            seed: 0,
            rates: SpeechRates::default(),
        }
    }
}

/// Gateway that answers every question with [`STUB_ANSWER`] without delay.
pub fn stub_gateway(config: LlmConfig) -> LlmGateway {
    LlmGateway::new(config, Arc::new(ScriptedTransport::answering(STUB_ANSWER)))
}

/// Drive one persona until the dialogue ends, the turn cap is hit or the
/// engine reports an error. Never panics on engine errors; they are recorded
/// as a breakdown.
pub fn run_persona(engine: &Engine, persona: &Persona, options: SimOptions) -> SimReport {
    let mut transcript = Vec::new();
    let mut visited = BTreeSet::new();
    let mut breakdown = None;
    let mut turn_cap_exceeded = false;
    let mut cursor = PersonaCursor::new(persona, options.seed);

    let session_id = format!("sim-{}", persona.persona_id);
    match engine.create_session_with_id(session_id, 0, &mut NoSink) {
        Err(e) => breakdown = Some(e.to_string()),
        Ok((mut session, opening)) => {
            visited.insert(opening.to_state.clone());
            transcript.push(TranscriptTurn {
                state: None,
                user_text: None,
                events: opening.events,
            });
            while !session.ended {
                if transcript.len() > options.turn_cap {
                    turn_cap_exceeded = true;
                    break;
                }
                let state = session.current_state.clone();
                let text = cursor.reply(&state);
                let now_ms = transcript.len() as u64 * 1000;
                match engine.step(&mut session, &text, now_ms, &mut NoSink) {
                    Ok(out) => {
                        visited.insert(out.to_state.clone());
                        transcript.push(TranscriptTurn {
                            state: Some(state),
                            user_text: Some(text),
                            events: out.events,
                        });
                    }
                    Err(e) => {
                        breakdown = Some(e.to_string());
                        break;
                    }
                }
            }
        }
    }

    let ended_cleanly = matches!(
        transcript.last().and_then(|t| t.events.last()),
        Some(crate::dialogue::Event::End)
    );
    SimReport {
        persona_id: persona.persona_id.clone(),
        turns: transcript.len().saturating_sub(1),
        estimated_duration_s: estimate_duration(&transcript, options.rates),
        transcript,
        visited_states: visited,
        ended_cleanly,
        turn_cap_exceeded,
        breakdown,
    }
}

/// Run personas in parallel, one thread each. Reports keep input order.
pub fn run_pack(engine: &Engine, personas: &[Persona], options: SimOptions) -> Vec<SimReport> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = personas
            .iter()
            .map(|p| scope.spawn(move || run_persona(engine, p, options)))
            .collect();
        handles
            .into_iter()
            .zip(personas)
            .map(|(h, p)| {
                h.join().unwrap_or_else(|_| SimReport {
                    persona_id: p.persona_id.clone(),
                    transcript: Vec::new(),
                    turns: 0,
                    estimated_duration_s: 0.0,
                    visited_states: BTreeSet::new(),
                    ended_cleanly: false,
                    turn_cap_exceeded: false,
                    breakdown: Some("simulation thread panicked".into()),
                })
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;
    use crate::dialogue::Event;
    use crate::flow::{ConditionExpr, FlowGraph, Phase, StateNode, Transition};
    use crate::nlu::NluResources;

    fn shipped_engine() -> Engine {
        Engine::new(
            data::flow().unwrap(),
            data::resources().unwrap(),
            data::catalog().unwrap(),
            stub_gateway(LlmConfig::default()),
        )
        .unwrap()
    }

    #[test]
    fn cooperative_yes_reaches_routes_and_ends() {
        let e = shipped_engine();
        let r = run_persona(&e, &Persona::constant("yes", "はい"), SimOptions::default());
        assert!(r.ended_cleanly, "{r:?}");
        assert_eq!(r.route_cards().len(), 1);
        assert!(r.breakdown.is_none());
        assert!(r.question_violations().is_empty(), "{:?}", r.question_violations());
    }

    #[test]
    fn empty_replies_still_terminate() {
        let e = shipped_engine();
        let r = run_persona(&e, &Persona::constant("silent", ""), SimOptions::default());
        assert!(r.ended_cleanly);
        assert!(!r.turn_cap_exceeded);
    }

    #[test]
    fn turn_cap_cuts_a_run_short() {
        let graph = FlowGraph::new(vec![
            StateNode::new("a", Phase::IceBreak, "a？").with_transition(Transition::new(ConditionExpr::Default, vec![], "b")),
            StateNode::new("b", Phase::IceBreak, "b？").with_transition(Transition::new(ConditionExpr::Default, vec![], "c")),
            StateNode::new("c", Phase::IceBreak, "c？").with_transition(Transition::new(ConditionExpr::Default, vec![], "d")),
            StateNode::new("d", Phase::IceBreak, "d"),
        ]);
        let e = Engine::new(graph, NluResources::default(), data::catalog().unwrap(), stub_gateway(LlmConfig::default())).unwrap();
        let p = Persona::constant("p", "x");
        let capped = run_persona(&e, &p, SimOptions { turn_cap: 1, ..SimOptions::default() });
        assert!(!capped.ended_cleanly);
        assert!(capped.turn_cap_exceeded);
        assert_eq!(capped.turns, 1);
        let full = run_persona(&e, &p, SimOptions::default());
        assert!(full.ended_cleanly);
        assert_eq!(full.turns, 3);
    }

    #[test]
    fn runs_are_byte_identical() {
        let e = shipped_engine();
        let personas: Vec<Persona> = data::PERSONAS.iter().map(|(_, j)| Persona::from_json(j).unwrap()).collect();
        let a = serde_json::to_string(&run_pack(&e, &personas, SimOptions::default())).unwrap();
        let b = serde_json::to_string(&run_pack(&e, &personas, SimOptions::default())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shipped_pack_covers_every_state() {
        let e = shipped_engine();
        let personas: Vec<Persona> = data::PERSONAS.iter().map(|(_, j)| Persona::from_json(j).unwrap()).collect();
        let reports = run_pack(&e, &personas, SimOptions::default());
        let cov = coverage_report(&reports, e.graph());
        assert!(cov.uncovered.is_empty(), "uncovered: {:?}", cov.uncovered);
        for r in &reports {
            assert!(r.ended_cleanly, "{} did not end", r.persona_id);
            assert_eq!(r.route_cards().len(), 1);
            assert!(matches!(r.transcript[0].events[0], Event::ShowImage { .. }));
        }
    }
}
