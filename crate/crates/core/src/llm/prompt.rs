use crate::dialogue::{HistoryEntry, Speaker, TouristRoute};

/// Session context handed to the prompt builder.
#[derive(Debug, Clone, Default)]
pub struct PromptContext<'a> {
    pub routes: Vec<&'a TouristRoute>,
    pub history: &'a [HistoryEntry],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn char_len(&self) -> usize {
        self.system.chars().count() + self.user.chars().count()
    }

    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PromptLimits {
    pub history_turns: usize,
    pub budget_chars: usize,
    pub max_answer_chars: usize,
}

/// Build the prompt for a free-form question: guide instruction, the two
/// recommended routes when known, the most recent history and the question.
/// History is dropped oldest first until the prompt fits the budget; if even
/// the bare prompt does not fit, the route block and then the text itself are
/// cut.
pub fn build_prompt(question: &str, ctx: &PromptContext<'_>, limits: PromptLimits) -> Prompt {
    let system = format!(
        "あなたは観光案内ロボットです。ユーザーの質問に、話し言葉で簡潔に{}文字以内で答えてください。",
        limits.max_answer_chars
    );
    let routes = if ctx.routes.is_empty() {
        String::new()
    } else {
        let mut block = String::from("おすすめしたルート:\n");
        for r in &ctx.routes {
            block.push_str(&format!(
                "- {}（{}→{}、移動: {}）\n",
                r.name, r.spots[0], r.spots[1], r.transport
            ));
        }
        block
    };
    let question_block = format!("質問: {question}");

    let window_start = ctx.history.len().saturating_sub(limits.history_turns);
    let mut history: Vec<String> = ctx.history[window_start..]
        .iter()
        .map(|h| {
            let who = match h.speaker {
                Speaker::System => "ロボット",
                Speaker::User => "ユーザー",
            };
            format!("{who}: {}\n", h.text)
        })
        .collect();

    let assemble = |routes: &str, history: &[String], question: &str| {
        let mut user = String::from(routes);
        if !history.is_empty() {
            user.push_str("会話履歴:\n");
            history.iter().for_each(|h| user.push_str(h));
        }
        user.push_str(question);
        Prompt {
            system: system.clone(),
            user,
        }
    };

    let budget = limits.budget_chars;
    let mut prompt = assemble(&routes, &history, &question_block);
    while prompt.char_len() > budget && !history.is_empty() {
        history.remove(0);
        prompt = assemble(&routes, &history, &question_block);
    }
    if prompt.char_len() > budget {
        prompt = assemble("", &[], &question_block);
    }
    if prompt.char_len() > budget {
        let room = budget.saturating_sub(prompt.system.chars().count());
        prompt.user = prompt.user.chars().take(room).collect();
        if room == 0 {
            prompt.system = prompt.system.chars().take(budget).collect();
        }
    }
    prompt
}
