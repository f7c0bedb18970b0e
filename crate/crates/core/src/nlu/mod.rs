//! Utterance understanding: dictionary keywords and labels, nearest-example
//! intent matching, and lexicon sentiment with override word lists.

mod embed;
mod examples;
mod keywords;
mod resources;
mod sentiment;
mod tokenize;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use embed::{bucket_of, cosine_similarity, embed_text, fnv1a64, DimensionMismatch, EmbeddingVector, EMBEDDING_DIM};
pub use examples::{match_example, ExampleItem, ExampleMatch, ExampleSet, DEFAULT_EXAMPLE_THRESHOLD};
pub use keywords::{extract_keywords, KeywordMatches, KeywordSpec};
pub use resources::{NluResources, ResourceError, ResourceTexts};
pub use sentiment::{analyze_sentiment, lexicon_score, Lexicon, Polarity, SentimentOverrides, SentimentResult};
pub use tokenize::{tokenize_and_label, LabelDictionary, Token};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnderstandingResult {
    pub tokens: Vec<Token>,
    pub matched_keyword_sets: BTreeSet<String>,
    pub matched_labels: BTreeSet<String>,
    pub example: Option<ExampleMatch>,
    pub sentiment: SentimentResult,
    pub is_question: bool,
    pub raw_text: String,
}

impl UnderstandingResult {
    pub fn empty() -> Self {
        Self {
            tokens: Vec::new(),
            matched_keyword_sets: BTreeSet::new(),
            matched_labels: BTreeSet::new(),
            example: None,
            sentiment: SentimentResult::neutral(),
            is_question: false,
            raw_text: String::new(),
        }
    }
}

pub fn is_question(text: &str, markers: &[String]) -> bool {
    text.contains('？') || text.contains('?') || markers.iter().any(|m| text.contains(m.as_str()))
}

pub fn understand(text: &str, resources: &NluResources) -> UnderstandingResult {
    let tokens = tokenize_and_label(text, &resources.dict);
    let matched_labels = tokens.iter().filter_map(|t| t.label.clone()).collect();
    let matched_keyword_sets = resources
        .keyword_specs
        .iter()
        .filter(|s| s.occurs_in(text))
        .map(|s| s.set_name.clone())
        .collect();
    UnderstandingResult {
        tokens,
        matched_keyword_sets,
        matched_labels,
        example: match_example(text, &resources.examples),
        sentiment: analyze_sentiment(text, &resources.lexicon, &resources.overrides),
        is_question: is_question(text, &resources.question_markers),
        raw_text: text.to_string(),
    }
}

/// Seam for swapping the built-in understanding for another implementation,
/// such as a network client to hosted models, without touching the engine.
pub trait Understander: Send + Sync {
    fn understand(&self, text: &str) -> UnderstandingResult;
}

/// The deterministic built-in implementation.
#[derive(Debug, Clone)]
pub struct LocalUnderstander {
    resources: NluResources,
}

impl LocalUnderstander {
    pub fn new(resources: NluResources) -> Self {
        Self { resources }
    }

    pub fn resources(&self) -> &NluResources {
        &self.resources
    }
}

impl Understander for LocalUnderstander {
    fn understand(&self, text: &str) -> UnderstandingResult {
        understand(text, &self.resources)
    }
}
