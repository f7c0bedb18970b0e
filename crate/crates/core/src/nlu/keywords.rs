use std::collections::BTreeSet;

use super::tokenize::{tokenize_and_label, LabelDictionary};

/// A named word list, e.g. `yes_words = {はい, うん}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSpec {
    pub set_name: String,
    pub words: BTreeSet<String>,
}

impl KeywordSpec {
    pub fn new(set_name: impl Into<String>, words: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            set_name: set_name.into(),
            words: words.into_iter().map(Into::into).filter(|w: &String| !w.is_empty()).collect(),
        }
    }

    pub fn occurs_in(&self, text: &str) -> bool {
        self.words.iter().any(|w| text.contains(w.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeywordMatches {
    pub keyword_sets: BTreeSet<String>,
    pub labels: BTreeSet<String>,
}

pub fn extract_keywords(text: &str, specs: &[KeywordSpec], dict: &LabelDictionary) -> KeywordMatches {
    let keyword_sets = specs
        .iter()
        .filter(|s| s.occurs_in(text))
        .map(|s| s.set_name.clone())
        .collect();
    let labels = tokenize_and_label(text, dict)
        .into_iter()
        .filter_map(|t| t.label)
        .collect();
    KeywordMatches { keyword_sets, labels }
}
