use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::keywords::KeywordSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentResult {
    pub polarity: Polarity,
    pub score: f64,
    /// Polarity came from an override word list rather than the lexicon.
    pub overridden: bool,
}

impl SentimentResult {
    pub fn neutral() -> Self {
        Self {
            polarity: Polarity::Neutral,
            score: 0.0,
            overridden: false,
        }
    }
}

pub type Lexicon = BTreeMap<String, f64>;

/// Word lists that force a polarity when the lexicon gets a phrase wrong,
/// e.g. a polite refusal such as 結構です.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentimentOverrides {
    pub negative: KeywordSpec,
    pub positive: KeywordSpec,
}

impl Default for SentimentOverrides {
    fn default() -> Self {
        Self {
            negative: KeywordSpec::new("negative_override", Vec::<String>::new()),
            positive: KeywordSpec::new("positive_override", Vec::<String>::new()),
        }
    }
}

/// Lexicon score summed over every (non-overlapping) occurrence of each word.
pub fn lexicon_score(text: &str, lexicon: &Lexicon) -> f64 {
    lexicon
        .iter()
        .map(|(word, weight)| text.matches(word.as_str()).count() as f64 * weight)
        .sum()
}

/// Negative overrides are checked first, then positive ones, then the sign of
/// the lexicon score decides.
pub fn analyze_sentiment(text: &str, lexicon: &Lexicon, overrides: &SentimentOverrides) -> SentimentResult {
    let score = lexicon_score(text, lexicon);
    let forced = if overrides.negative.occurs_in(text) {
        Some(Polarity::Negative)
    } else if overrides.positive.occurs_in(text) {
        Some(Polarity::Positive)
    } else {
        None
    };
    match forced {
        Some(polarity) => SentimentResult {
            polarity,
            score,
            overridden: true,
        },
        None => SentimentResult {
            polarity: if score > 0.0 {
                Polarity::Positive
            } else if score < 0.0 {
                Polarity::Negative
            } else {
                Polarity::Neutral
            },
            score,
            overridden: false,
        },
    }
}
