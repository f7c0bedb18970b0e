//! The Kyoto guide flow, resources, routes and personas compiled into the
//! binary, so the engine runs without any files on disk.

use crate::dialogue::{CatalogError, RouteCatalog};
use crate::flow::{parse_flow_sheet, Diagnostic, FlowGraph};
use crate::nlu::{NluResources, ResourceError, ResourceTexts, DEFAULT_EXAMPLE_THRESHOLD};

pub const FLOW_TSV: &str = include_str!("../data/flow.tsv");
pub const ROUTES_JSON: &str = include_str!("../data/routes.json");

pub const KEYWORDS_TSV: &str = include_str!("../data/resources/keywords.tsv");
pub const LABELS_TSV: &str = include_str!("../data/resources/labels.tsv");
pub const EXAMPLES_TSV: &str = include_str!("../data/resources/examples.tsv");
pub const SENTIMENT_LEXICON_TSV: &str = include_str!("../data/resources/sentiment_lexicon.tsv");
pub const OVERRIDES_TSV: &str = include_str!("../data/resources/overrides.tsv");
pub const QUESTION_MARKERS_TSV: &str = include_str!("../data/resources/question_markers.tsv");

/// `(file stem, JSON)` for each shipped persona.
pub const PERSONAS: &[(&str, &str)] = &[
    ("cooperative", include_str!("../data/personas/cooperative.json")),
    ("kinkakuji_fan", include_str!("../data/personas/kinkakuji_fan.json")),
    ("decliner", include_str!("../data/personas/decliner.json")),
    ("question_asker", include_str!("../data/personas/question_asker.json")),
    ("uncooperative", include_str!("../data/personas/uncooperative.json")),
];

/// Image shown with the opening quiz.
pub const QUIZ_IMAGE_ID: &str = "quiz_kinkakuji";

pub fn resource_texts() -> ResourceTexts {
    ResourceTexts {
        keywords: KEYWORDS_TSV.into(),
        labels: LABELS_TSV.into(),
        examples: EXAMPLES_TSV.into(),
        sentiment_lexicon: SENTIMENT_LEXICON_TSV.into(),
        overrides: OVERRIDES_TSV.into(),
        question_markers: QUESTION_MARKERS_TSV.into(),
    }
}

pub fn flow() -> Result<FlowGraph, Vec<Diagnostic>> {
    parse_flow_sheet(FLOW_TSV, true)
}

pub fn resources() -> Result<NluResources, ResourceError> {
    NluResources::from_texts(&resource_texts(), DEFAULT_EXAMPLE_THRESHOLD)
}

pub fn catalog() -> Result<RouteCatalog, CatalogError> {
    RouteCatalog::from_json(ROUTES_JSON)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_data_loads() {
        let graph = flow().unwrap();
        assert!(graph.len() >= 15);
        assert_eq!(graph.phases().len(), 3);
        let res = resources().unwrap();
        assert!(crate::dialogue::check_resources(&graph, &res).is_empty());
        assert!(catalog().unwrap().routes().len() >= 4);
    }
}
