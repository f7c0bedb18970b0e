//! Loading of the TSV resource files that drive understanding.
//!
//! | file                    | columns                   |
//! |-------------------------|---------------------------|
//! | `keywords.tsv`          | `set_name \t word`        |
//! | `labels.tsv`            | `surface \t LABEL`        |
//! | `examples.tsv`          | `intent_id \t example`    |
//! | `sentiment_lexicon.tsv` | `word \t signed_weight`   |
//! | `overrides.tsv`         | `polarity \t word`        |
//! | `question_markers.tsv`  | `word` (optional file)    |
//!
//! Lines starting with `#` and blank lines are ignored.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::examples::{ExampleSet, DEFAULT_EXAMPLE_THRESHOLD};
use super::keywords::KeywordSpec;
use super::sentiment::{Lexicon, SentimentOverrides};
use super::tokenize::LabelDictionary;

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("{file}:{line}: {message}")]
    Invalid {
        file: String,
        line: usize,
        message: String,
    },
    #[error("reading {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

/// Raw file contents, one field per resource file.
#[derive(Debug, Clone, Default)]
pub struct ResourceTexts {
    pub keywords: String,
    pub labels: String,
    pub examples: String,
    pub sentiment_lexicon: String,
    pub overrides: String,
    pub question_markers: String,
}

impl ResourceTexts {
    pub fn read_dir(dir: &Path) -> Result<Self, ResourceError> {
        let read = |name: &str, required: bool| -> Result<String, ResourceError> {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(s) => Ok(s),
                Err(e) if !required && e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
                Err(source) => Err(ResourceError::Io {
                    file: path.display().to_string(),
                    source,
                }),
            }
        };
        Ok(Self {
            keywords: read("keywords.tsv", true)?,
            labels: read("labels.tsv", true)?,
            examples: read("examples.tsv", true)?,
            sentiment_lexicon: read("sentiment_lexicon.tsv", true)?,
            overrides: read("overrides.tsv", true)?,
            question_markers: read("question_markers.tsv", false)?,
        })
    }
}

/// Everything `understand` needs. Immutable after load.
#[derive(Debug, Clone, PartialEq)]
pub struct NluResources {
    pub dict: LabelDictionary,
    pub keyword_specs: Vec<KeywordSpec>,
    pub examples: ExampleSet,
    pub lexicon: Lexicon,
    pub overrides: SentimentOverrides,
    pub question_markers: Vec<String>,
}

impl Default for NluResources {
    fn default() -> Self {
        Self {
            dict: LabelDictionary::new(),
            keyword_specs: Vec::new(),
            examples: ExampleSet::new(DEFAULT_EXAMPLE_THRESHOLD),
            lexicon: Lexicon::new(),
            overrides: SentimentOverrides::default(),
            question_markers: Vec::new(),
        }
    }
}

impl NluResources {
    pub fn load_dir(dir: &Path, example_threshold: f64) -> Result<Self, ResourceError> {
        Self::from_texts(&ResourceTexts::read_dir(dir)?, example_threshold)
    }

    pub fn from_texts(texts: &ResourceTexts, example_threshold: f64) -> Result<Self, ResourceError> {
        let mut sets: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut order = Vec::new();
        for (line, cols) in rows("keywords.tsv", &texts.keywords, 2)? {
            if !is_identifier(cols[0]) {
                return Err(invalid("keywords.tsv", line, format!("bad set name `{}`", cols[0])));
            }
            if !sets.contains_key(cols[0]) {
                order.push(cols[0].to_string());
            }
            sets.entry(cols[0].to_string()).or_default().push(cols[1].to_string());
        }
        let keyword_specs = order
            .into_iter()
            .map(|name| {
                let words = sets.remove(&name).unwrap_or_default();
                KeywordSpec::new(name, words)
            })
            .collect();

        let mut dict = LabelDictionary::new();
        for (line, cols) in rows("labels.tsv", &texts.labels, 2)? {
            if !is_label(cols[1]) {
                return Err(invalid("labels.tsv", line, format!("label `{}` must match [A-Z_]+", cols[1])));
            }
            dict.insert(cols[0], cols[1]);
        }

        let mut examples = ExampleSet::new(example_threshold);
        for (line, cols) in rows("examples.tsv", &texts.examples, 2)? {
            if !is_identifier(cols[0]) {
                return Err(invalid("examples.tsv", line, format!("bad intent id `{}`", cols[0])));
            }
            examples.push(cols[0], cols[1]);
        }

        let mut lexicon = Lexicon::new();
        for (line, cols) in rows("sentiment_lexicon.tsv", &texts.sentiment_lexicon, 2)? {
            let weight: f64 = cols[1]
                .parse()
                .ok()
                .filter(|w: &f64| w.is_finite())
                .ok_or_else(|| invalid("sentiment_lexicon.tsv", line, format!("bad weight `{}`", cols[1])))?;
            lexicon.insert(cols[0].to_string(), weight);
        }

        let (mut negative, mut positive) = (Vec::new(), Vec::new());
        for (line, cols) in rows("overrides.tsv", &texts.overrides, 2)? {
            match cols[0] {
                "negative" => negative.push(cols[1].to_string()),
                "positive" => positive.push(cols[1].to_string()),
                other => {
                    return Err(invalid(
                        "overrides.tsv",
                        line,
                        format!("polarity must be positive or negative, got `{other}`"),
                    ))
                }
            }
        }

        let question_markers = rows("question_markers.tsv", &texts.question_markers, 1)?
            .into_iter()
            .map(|(_, cols)| cols[0].to_string())
            .collect();

        Ok(Self {
            dict,
            keyword_specs,
            examples,
            lexicon,
            overrides: SentimentOverrides {
                negative: KeywordSpec::new("negative_override", negative),
                positive: KeywordSpec::new("positive_override", positive),
            },
            question_markers,
        })
    }

    pub fn keyword_set(&self, name: &str) -> Option<&KeywordSpec> {
        self.keyword_specs.iter().find(|s| s.set_name == name)
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.dict.labels().any(|l| l == label)
    }

    pub fn has_intent(&self, intent: &str) -> bool {
        self.examples.intents().any(|i| i == intent)
    }
}

fn invalid(file: &str, line: usize, message: String) -> ResourceError {
    ResourceError::Invalid {
        file: file.to_string(),
        line,
        message,
    }
}

fn rows<'a>(file: &str, text: &'a str, columns: usize) -> Result<Vec<(usize, Vec<&'a str>)>, ResourceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if cols.len() != columns || cols.iter().any(|c| c.is_empty()) {
            return Err(invalid(
                file,
                i + 1,
                format!("expected {columns} non-empty tab-separated column(s)"),
            ));
        }
        out.push((i + 1, cols));
    }
    Ok(out)
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

fn is_label(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_uppercase() || b == b'_')
}
