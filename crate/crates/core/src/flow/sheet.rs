//! Tab-separated flow sheet: `state  phase  utterance  condition  actions  next_state`.
//!
//! Rows of one state are read in order. The first row carries the state's
//! utterance; later rows leave it empty. A row with both `condition` and
//! `next_state` empty declares the state without a transition: it may only be
//! the first row, and its actions run on entry. A state with no transition
//! rows is terminal.

use std::collections::HashMap;

use super::validate::{validate_graph_with, Diagnostic, Rule, ValidateOptions};
use super::{parse_actions, parse_condition, Action, FlowGraph, Phase, StateNode, Transition};

const COLUMNS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SheetRow {
    pub line: usize,
    pub state_id: String,
    pub phase: String,
    pub utterance_template: String,
    pub condition_src: String,
    pub actions_src: String,
    pub next_state: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowSheet {
    pub rows: Vec<SheetRow>,
}

impl FlowSheet {
    /// Split the sheet into rows. Blank lines, `#` comments and an optional
    /// `state\tphase\t...` header are skipped.
    pub fn parse(text: &str) -> Result<Self, Vec<Diagnostic>> {
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let mut rows = Vec::new();
        let mut diags = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() != COLUMNS {
                diags.push(
                    Diagnostic::new(
                        Rule::MalformedRow,
                        None,
                        format!("expected {COLUMNS} tab-separated columns, found {}", cols.len()),
                    )
                    .at_line(line),
                );
                continue;
            }
            if rows.is_empty() && cols[0].trim() == "state" && cols[1].trim() == "phase" {
                continue;
            }
            rows.push(SheetRow {
                line,
                state_id: cols[0].trim().to_string(),
                phase: cols[1].trim().to_string(),
                utterance_template: cols[2].trim().to_string(),
                condition_src: cols[3].trim().to_string(),
                actions_src: cols[4].trim().to_string(),
                next_state: cols[5].trim().to_string(),
            });
        }
        if diags.is_empty() {
            Ok(Self { rows })
        } else {
            Err(diags)
        }
    }

    /// Build the graph, reporting every row-level problem found. The graph is
    /// returned alongside the diagnostics so graph lints can still run.
    pub fn compile(&self) -> (FlowGraph, Vec<Diagnostic>) {
        let mut diags = Vec::new();
        let mut order: Vec<String> = Vec::new();
        let mut nodes: HashMap<String, StateNode> = HashMap::new();

        for row in &self.rows {
            let id = row.state_id.as_str();
            let err = |rule: Rule, msg: String| Diagnostic::new(rule, Some(id), msg).at_line(row.line);

            if id.is_empty() {
                diags.push(err(Rule::MalformedRow, "empty state id".into()));
                continue;
            }
            let phase = match row.phase.parse::<Phase>() {
                Ok(p) => p,
                Err(msg) => {
                    diags.push(err(Rule::BadPhase, msg));
                    continue;
                }
            };
            let actions: Vec<Action> = match parse_actions(&row.actions_src) {
                Ok(a) => a,
                Err(e) => {
                    diags.push(err(Rule::ActionSyntax, e.to_string()));
                    Vec::new()
                }
            };

            let is_first = !nodes.contains_key(id);
            if is_first {
                order.push(id.to_string());
                nodes.insert(
                    id.to_string(),
                    StateNode::new(id, phase, row.utterance_template.clone()),
                );
            }
            let node = nodes.get_mut(id).unwrap();
            if !is_first {
                if node.phase != phase {
                    diags.push(err(
                        Rule::PhaseConflict,
                        format!("phase {phase} differs from the state's first row ({})", node.phase),
                    ));
                }
                if !row.utterance_template.is_empty() {
                    diags.push(err(
                        Rule::DuplicateUtterance,
                        "only the first row of a state may carry an utterance".into(),
                    ));
                }
            }

            match (row.condition_src.is_empty(), row.next_state.is_empty()) {
                (true, true) => {
                    if is_first {
                        node.entry_actions = actions;
                    } else {
                        diags.push(err(
                            Rule::MalformedRow,
                            "a row without condition and next_state must be the state's first row".into(),
                        ));
                    }
                }
                (false, false) => match parse_condition(&row.condition_src) {
                    Ok(condition) => node.transitions.push(Transition {
                        condition,
                        actions,
                        next_state: row.next_state.clone(),
                        line: row.line,
                    }),
                    Err(e) => diags.push(err(Rule::ConditionSyntax, e.to_string())),
                },
                (true, false) => diags.push(err(Rule::MalformedRow, "transition row has no condition".into())),
                (false, true) => diags.push(err(Rule::MalformedRow, "transition row has no next_state".into())),
            }
        }

        let states = order
            .into_iter()
            .map(|id| nodes.remove(&id).unwrap())
            .collect();
        (FlowGraph::new(states), diags)
    }
}

/// Compile a flow sheet into a validated graph.
///
/// With `strict_question_lint`, every non-terminal utterance must end in a
/// question mark so that each system turn invites an answer.
pub fn parse_flow_sheet(sheet_text: &str, strict_question_lint: bool) -> Result<FlowGraph, Vec<Diagnostic>> {
    let sheet = FlowSheet::parse(sheet_text)?;
    let (graph, mut diags) = sheet.compile();
    diags.extend(validate_graph_with(&graph, ValidateOptions { strict_question_lint }));
    if diags.is_empty() {
        Ok(graph)
    } else {
        Err(diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{Builtin, ConditionExpr, SlotValue};

    const MINIMAL: &str = "s0\tice_break\t行きたいですか？\tdefault\t\tend\nend\tice_break\tさようなら\t\t\t\n";

    #[test]
    fn minimal_sheet() {
        let g = parse_flow_sheet(MINIMAL, true).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.initial_state(), "s0");
        let s0 = g.state("s0").unwrap();
        assert_eq!(s0.transitions.len(), 1);
        assert_eq!(s0.transitions[0].condition, ConditionExpr::Default);
        assert_eq!(g.terminal_states().collect::<Vec<_>>(), vec!["end"]);
    }

    #[test]
    fn header_comments_and_crlf() {
        let text = "# a comment\r\nstate\tphase\tutterance\tcondition\tactions\tnext_state\r\n\r\n".to_string()
            + &MINIMAL.replace('\n', "\r\n");
        let strip = |g: FlowGraph| {
            let states = g
                .states()
                .iter()
                .cloned()
                .map(|mut s| {
                    s.transitions.iter_mut().for_each(|t| t.line = 0);
                    s
                })
                .collect();
            FlowGraph::new(states)
        };
        let g = parse_flow_sheet(&text, false).unwrap();
        assert_eq!(g.state("s0").unwrap().transitions[0].line, 4);
        assert_eq!(strip(g), strip(parse_flow_sheet(MINIMAL, false).unwrap()));
    }

    #[test]
    fn missing_default() {
        let text = "s0\tice_break\t行きたいですか？\tkeyword(yes_words)\t\tend\nend\tice_break\tさようなら\t\t\t\n";
        let d = parse_flow_sheet(text, false).unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].rule, Rule::MissingDefault);
        assert_eq!(d[0].state.as_deref(), Some("s0"));
    }

    #[test]
    fn row_level_errors() {
        let text = "s0\tice_break\tどう？\tdefault\tend\n";
        let d = parse_flow_sheet(text, false).unwrap_err();
        assert_eq!(d[0].rule, Rule::MalformedRow);
        assert_eq!(d[0].line, Some(1));

        let text = "s0\tice_break\tどう？\tkeyword(a)\t\tend\ns0\tice_break\tまた？\tdefault\t\tend\nend\tice_break\tじゃあ\t\t\t\n";
        let d = parse_flow_sheet(text, false).unwrap_err();
        assert_eq!(d.iter().map(|d| d.rule).collect::<Vec<_>>(), vec![Rule::DuplicateUtterance]);
        assert_eq!(d[0].line, Some(2));

        let text = "s0\tlunch\tどう？\tdefault\t\tend\n";
        assert!(parse_flow_sheet(text, false)
            .unwrap_err()
            .iter()
            .any(|d| d.rule == Rule::BadPhase));

        let text = "s0\tice_break\tどう？\tkeyword(a) &\t\tend\nend\tice_break\tじゃあ\t\t\t\n";
        let d = parse_flow_sheet(text, false).unwrap_err();
        assert!(d.iter().any(|d| d.rule == Rule::ConditionSyntax && d.line == Some(1)));

        let text = "s0\tice_break\tどう？\tdefault\tdance()\tend\nend\tice_break\tじゃあ\t\t\t\n";
        let d = parse_flow_sheet(text, false).unwrap_err();
        assert_eq!(d[0].rule, Rule::ActionSyntax);

        let text = "s0\tice_break\tどう？\tdefault\t\tghost\n";
        let d = parse_flow_sheet(text, false).unwrap_err();
        assert_eq!(d[0].rule, Rule::UnknownState);
    }

    #[test]
    fn entry_row_and_actions() {
        let text = "\
quiz\tice_break\tここはどこでしょう？\t\tshow_image(kinkakuji)\t
quiz\tice_break\t\tkeyword(quiz_answer)\tset(quiz,correct)\tend
quiz\tice_break\t\tdefault\tset(memo,$utterance)\tend
end\tice_break\tありがとう\t\t\t
";
        let g = parse_flow_sheet(text, true).unwrap();
        let quiz = g.state("quiz").unwrap();
        assert_eq!(quiz.entry_actions, vec![Action::ShowImage("kinkakuji".into())]);
        assert_eq!(quiz.transitions.len(), 2);
        assert_eq!(
            quiz.transitions[0].condition,
            ConditionExpr::call(Builtin::Keyword, ["quiz_answer"])
        );
        assert_eq!(
            quiz.transitions[1].actions,
            vec![Action::Set {
                key: "memo".into(),
                value: SlotValue::Utterance
            }]
        );
        assert_eq!(quiz.transitions[1].line, 3);
    }

    #[test]
    fn strict_lint_rejects_statement() {
        let text = "s0\tice_break\t行きましょう。\tdefault\t\tend\nend\tice_break\tさようなら\t\t\t\n";
        assert!(parse_flow_sheet(text, false).is_ok());
        let d = parse_flow_sheet(text, true).unwrap_err();
        assert_eq!(d[0].rule, Rule::MissingQuestion);
    }

    #[test]
    fn compile_is_deterministic() {
        let a = parse_flow_sheet(crate::data::FLOW_TSV, true).unwrap();
        let b = parse_flow_sheet(crate::data::FLOW_TSV, true).unwrap();
        assert_eq!(a, b);
    }
}
