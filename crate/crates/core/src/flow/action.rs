use std::fmt;

use thiserror::Error;

use super::condition::is_slot_key;

/// Value written by a `set` action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotValue {
    Literal(String),
    /// The raw user utterance of the current turn.
    Utterance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Set { key: String, value: SlotValue },
    ShowImage(String),
    LlmAnswer,
    RecommendRoutes,
    EndDialogue,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("malformed action `{0}`")]
    Malformed(String),
    #[error("unknown action `{0}`")]
    Unknown(String),
    #[error("`{action}` expects {expected} argument(s), got {got}")]
    Arity {
        action: String,
        expected: usize,
        got: usize,
    },
    #[error("`{0}` is not a valid identifier ([a-z0-9_]+)")]
    BadIdentifier(String),
    #[error("empty literal in `set`")]
    EmptyLiteral,
}

/// Parse the `;`-separated actions column. An empty column is no actions.
pub fn parse_actions(src: &str) -> Result<Vec<Action>, ActionError> {
    src.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_action)
        .collect()
}

fn parse_action(src: &str) -> Result<Action, ActionError> {
    let open = src
        .find('(')
        .ok_or_else(|| ActionError::Malformed(src.to_string()))?;
    if !src.ends_with(')') {
        return Err(ActionError::Malformed(src.to_string()));
    }
    let name = src[..open].trim();
    let inner = src[open + 1..src.len() - 1].trim();
    let args: Vec<&str> = if inner.is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(str::trim).collect()
    };
    let arity = |expected: usize| {
        if args.len() == expected {
            Ok(())
        } else {
            Err(ActionError::Arity {
                action: name.to_string(),
                expected,
                got: args.len(),
            })
        }
    };
    match name {
        "set" => {
            arity(2)?;
            let key = ident(args[0])?;
            let value = match args[1] {
                "$utterance" => SlotValue::Utterance,
                "" => return Err(ActionError::EmptyLiteral),
                lit => SlotValue::Literal(lit.to_string()),
            };
            Ok(Action::Set { key, value })
        }
        "show_image" => {
            arity(1)?;
            Ok(Action::ShowImage(ident(args[0])?))
        }
        "llm_answer" => arity(0).map(|_| Action::LlmAnswer),
        "recommend_routes" => arity(0).map(|_| Action::RecommendRoutes),
        "end" => arity(0).map(|_| Action::EndDialogue),
        other => Err(ActionError::Unknown(other.to_string())),
    }
}

fn ident(s: &str) -> Result<String, ActionError> {
    if is_slot_key(s) {
        Ok(s.to_string())
    } else {
        Err(ActionError::BadIdentifier(s.to_string()))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Set {
                key,
                value: SlotValue::Literal(v),
            } => write!(f, "set({key},{v})"),
            Action::Set {
                key,
                value: SlotValue::Utterance,
            } => write!(f, "set({key},$utterance)"),
            Action::ShowImage(id) => write!(f, "show_image({id})"),
            Action::LlmAnswer => f.write_str("llm_answer()"),
            Action::RecommendRoutes => f.write_str("recommend_routes()"),
            Action::EndDialogue => f.write_str("end()"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        let got = parse_actions(
            "set(food,ラーメン); set(memo,$utterance);show_image(quiz_1) ; llm_answer(); recommend_routes(); end()",
        )
        .unwrap();
        assert_eq!(
            got,
            vec![
                Action::Set {
                    key: "food".into(),
                    value: SlotValue::Literal("ラーメン".into())
                },
                Action::Set {
                    key: "memo".into(),
                    value: SlotValue::Utterance
                },
                Action::ShowImage("quiz_1".into()),
                Action::LlmAnswer,
                Action::RecommendRoutes,
                Action::EndDialogue,
            ]
        );
        assert!(parse_actions("").unwrap().is_empty());
        assert!(parse_actions("  ; ").unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_actions() {
        assert!(matches!(parse_actions("dance()"), Err(ActionError::Unknown(_))));
        assert!(matches!(parse_actions("end"), Err(ActionError::Malformed(_))));
        assert!(matches!(
            parse_actions("show_image(Quiz)"),
            Err(ActionError::BadIdentifier(_))
        ));
        assert!(matches!(
            parse_actions("show_image()"),
            Err(ActionError::Arity { got: 0, .. })
        ));
        assert!(matches!(parse_actions("set(a,)"), Err(ActionError::EmptyLiteral)));
        assert!(matches!(parse_actions("end(x)"), Err(ActionError::Arity { .. })));
    }

    #[test]
    fn display_reparses() {
        let src = "set(food,寿司);show_image(a1);llm_answer();recommend_routes();end();set(k,$utterance)";
        let actions = parse_actions(src).unwrap();
        let printed: Vec<String> = actions.iter().map(ToString::to_string).collect();
        assert_eq!(parse_actions(&printed.join(";")).unwrap(), actions);
    }
}
