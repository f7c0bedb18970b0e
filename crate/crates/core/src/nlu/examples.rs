use serde::{Deserialize, Serialize};

use super::embed::{cosine_similarity, embed_text, EmbeddingVector};

pub const DEFAULT_EXAMPLE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleItem {
    pub intent_id: String,
    pub example_text: String,
    pub vector: EmbeddingVector,
}

/// Example sentences per intent; a query matches its nearest example when the
/// similarity reaches `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSet {
    items: Vec<ExampleItem>,
    threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMatch {
    pub intent_id: String,
    pub similarity: f64,
}

impl Default for ExampleSet {
    fn default() -> Self {
        Self::new(DEFAULT_EXAMPLE_THRESHOLD)
    }
}

impl ExampleSet {
    pub fn new(threshold: f64) -> Self {
        Self {
            items: Vec::new(),
            threshold: threshold.clamp(0.0, 1.0),
        }
    }

    pub fn from_pairs<I, S, T>(threshold: f64, pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut set = Self::new(threshold);
        for (intent, text) in pairs {
            set.push(intent, text);
        }
        set
    }

    pub fn push(&mut self, intent_id: impl Into<String>, example_text: impl Into<String>) {
        let example_text = example_text.into();
        self.items.push(ExampleItem {
            intent_id: intent_id.into(),
            vector: embed_text(&example_text),
            example_text,
        });
    }

    pub fn items(&self) -> &[ExampleItem] {
        &self.items
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn intents(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.intent_id.as_str())
    }
}

/// Nearest example by cosine similarity; the earliest item wins ties.
pub fn match_example(text: &str, set: &ExampleSet) -> Option<ExampleMatch> {
    let query = embed_text(text);
    let mut best: Option<(usize, f64)> = None;
    for (i, item) in set.items.iter().enumerate() {
        let sim = cosine_similarity(&query, &item.vector).unwrap_or(0.0);
        if best.map_or(true, |(_, s)| sim > s) {
            best = Some((i, sim));
        }
    }
    let (i, similarity) = best?;
    (similarity >= set.threshold).then(|| ExampleMatch {
        intent_id: set.items[i].intent_id.clone(),
        similarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(text: &str, set: &ExampleSet) -> Option<(String, f64)> {
        let q = embed_text(text);
        let sims: Vec<f64> = set
            .items()
            .iter()
            .map(|it| cosine_similarity(&q, &embed_text(&it.example_text)).unwrap())
            .collect();
        let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let idx = sims.iter().position(|&s| s == max)?;
        (max >= set.threshold()).then(|| (set.items()[idx].intent_id.clone(), max))
    }

    #[test]
    fn identical_text_matches_with_similarity_one() {
        let set = ExampleSet::from_pairs(0.5, [("food_ramen", "ラーメンが食べたい"), ("food_sushi", "お寿司が好き")]);
        let m = match_example("お寿司が好き", &set).unwrap();
        assert_eq!(m.intent_id, "food_sushi");
        assert!((m.similarity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_set_never_matches() {
        assert_eq!(match_example("なんでも", &ExampleSet::default()), None);
    }

    #[test]
    fn nearest_of_three_intents() {
        let set = ExampleSet::from_pairs(
            0.3,
            [
                ("transport_train", "電車で移動したいです"),
                ("transport_bus", "バスで行きたいです"),
                ("transport_car", "車を運転して行きます"),
                ("transport_bus", "市バスに乗りたい"),
            ],
        );
        let query = "バスに乗って行きたい";
        let m = match_example(query, &set).unwrap();
        let (intent, sim) = brute_force(query, &set).unwrap();
        assert_eq!(m.intent_id, "transport_bus");
        assert_eq!((m.intent_id.as_str(), m.similarity), (intent.as_str(), sim));
    }

    #[test]
    fn below_threshold_is_none() {
        let set = ExampleSet::from_pairs(0.99, [("a", "京都に行きたい")]);
        assert_eq!(match_example("京都へ行こう", &set), None);
        // Zero query vector scores 0 everywhere: only a zero threshold accepts it.
        let set = ExampleSet::from_pairs(0.0, [("a", "x"), ("b", "y")]);
        assert_eq!(match_example("", &set).unwrap().intent_id, "a");
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let set = ExampleSet::from_pairs(0.1, [("first", "同じ文"), ("second", "同じ文")]);
        assert_eq!(match_example("同じ文", &set).unwrap().intent_id, "first");
    }
}
