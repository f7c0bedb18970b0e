use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub label: Option<String>,
    /// Byte range `[start, end)` in the input.
    pub byte_span: (usize, usize),
}

/// Surface form to label, e.g. `ラーメン → FOOD`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelDictionary {
    entries: BTreeMap<String, String>,
    max_chars: usize,
}

impl LabelDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Later inserts of the same surface replace earlier ones. Empty surfaces
    /// are ignored.
    pub fn insert(&mut self, surface: impl Into<String>, label: impl Into<String>) {
        let surface = surface.into();
        if surface.is_empty() {
            return;
        }
        self.max_chars = self.max_chars.max(surface.chars().count());
        self.entries.insert(surface, label.into());
    }

    pub fn get(&self, surface: &str) -> Option<&str> {
        self.entries.get(surface).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(s, l)| (s.as_str(), l.as_str()))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.values().map(String::as_str)
    }
}

impl<S: Into<String>, L: Into<String>> FromIterator<(S, L)> for LabelDictionary {
    fn from_iter<I: IntoIterator<Item = (S, L)>>(iter: I) -> Self {
        let mut dict = LabelDictionary::new();
        for (s, l) in iter {
            dict.insert(s, l);
        }
        dict
    }
}

/// Greedy left-to-right longest match against the dictionary. Text between
/// matches becomes one unlabeled token per maximal run.
pub fn tokenize_and_label(text: &str, dict: &LabelDictionary) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut pos = 0;

    while pos < text.len() {
        let found = longest_match_at(text, pos, dict);
        match found {
            Some((end, label)) => {
                if let Some(start) = run_start.take() {
                    tokens.push(Token {
                        surface: text[start..pos].to_string(),
                        label: None,
                        byte_span: (start, pos),
                    });
                }
                tokens.push(Token {
                    surface: text[pos..end].to_string(),
                    label: Some(label.to_string()),
                    byte_span: (pos, end),
                });
                pos = end;
            }
            None => {
                run_start.get_or_insert(pos);
                pos += text[pos..].chars().next().map_or(1, char::len_utf8);
            }
        }
    }
    if let Some(start) = run_start {
        tokens.push(Token {
            surface: text[start..].to_string(),
            label: None,
            byte_span: (start, text.len()),
        });
    }
    tokens
}

fn longest_match_at<'d>(text: &str, pos: usize, dict: &'d LabelDictionary) -> Option<(usize, &'d str)> {
    let mut ends: Vec<usize> = text[pos..]
        .char_indices()
        .skip(1)
        .map(|(i, _)| pos + i)
        .take(dict.max_chars)
        .collect();
    if text[pos..].chars().nth(dict.max_chars).is_none() {
        ends.push(text.len());
    }
    ends.into_iter()
        .rev()
        .find_map(|end| dict.get(&text[pos..end]).map(|label| (end, label)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Oracle: at each position try every end offset and keep the longest hit.
    fn brute_force(text: &str, dict: &LabelDictionary) -> Vec<(String, Option<String>)> {
        let bounds: Vec<usize> = text
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(text.len()))
            .collect();
        let mut out: Vec<(String, Option<String>)> = Vec::new();
        let mut run = String::new();
        let mut i = 0;
        while i + 1 < bounds.len() {
            let mut best = None;
            for j in (i + 1)..bounds.len() {
                if let Some(l) = dict.get(&text[bounds[i]..bounds[j]]) {
                    best = Some((j, l));
                }
            }
            match best {
                Some((j, l)) => {
                    if !run.is_empty() {
                        out.push((std::mem::take(&mut run), None));
                    }
                    out.push((text[bounds[i]..bounds[j]].to_string(), Some(l.to_string())));
                    i = j;
                }
                None => {
                    run.push_str(&text[bounds[i]..bounds[i + 1]]);
                    i += 1;
                }
            }
        }
        if !run.is_empty() {
            out.push((run, None));
        }
        out
    }

    fn simplify(tokens: &[Token]) -> Vec<(String, Option<String>)> {
        tokens.iter().map(|t| (t.surface.clone(), t.label.clone())).collect()
    }

    #[test]
    fn empty_text() {
        assert!(tokenize_and_label("", &LabelDictionary::new()).is_empty());
    }

    #[test]
    fn labels_food_and_keeps_tail() {
        let dict: LabelDictionary = [("ラーメン", "FOOD")].into_iter().collect();
        let tokens = tokenize_and_label("ラーメンが好き", &dict);
        assert_eq!(
            simplify(&tokens),
            vec![
                ("ラーメン".to_string(), Some("FOOD".to_string())),
                ("が好き".to_string(), None)
            ]
        );
        assert_eq!(tokens[0].byte_span, (0, 12));
        assert_eq!(tokens[1].byte_span, (12, 21));
        assert_eq!(simplify(&tokens), brute_force("ラーメンが好き", &dict));
    }

    #[test]
    fn longest_match_wins() {
        let dict: LabelDictionary = [("春", "SEASON"), ("春巻き", "FOOD")].into_iter().collect();
        let tokens = tokenize_and_label("春巻き", &dict);
        assert_eq!(simplify(&tokens), vec![("春巻き".to_string(), Some("FOOD".to_string()))]);
        assert_eq!(simplify(&tokens), brute_force("春巻き", &dict));
        let tokens = tokenize_and_label("春が来た春巻き", &dict);
        assert_eq!(simplify(&tokens), brute_force("春が来た春巻き", &dict));
        assert_eq!(tokens.len(), 3);
    }

    proptest! {
        #[test]
        fn lossless_and_matches_oracle(
            text in "[春巻きがラーメンab ]{0,16}",
            entries in prop::collection::vec(("[春巻きがラーメンab]{1,3}", "[A-Z]{1,4}"), 0..6),
        ) {
            let dict: LabelDictionary = entries.into_iter().collect();
            let tokens = tokenize_and_label(&text, &dict);
            let joined: String = tokens.iter().map(|t| t.surface.as_str()).collect();
            prop_assert_eq!(&joined, &text);
            let mut last = 0;
            for t in &tokens {
                prop_assert_eq!(t.byte_span.0, last);
                prop_assert!(t.byte_span.1 > t.byte_span.0);
                prop_assert_eq!(&text[t.byte_span.0..t.byte_span.1], t.surface.as_str());
                last = t.byte_span.1;
            }
            prop_assert_eq!(simplify(&tokens), brute_force(&text, &dict));
        }
    }
}
