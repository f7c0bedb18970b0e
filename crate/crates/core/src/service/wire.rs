use serde::{Deserialize, Serialize};

use crate::dialogue::{Event, RouteCatalog, TouristRoute};

/// Event as sent to clients:
/// `{"type": "utterance"|"filler"|"image"|"routes"|"end", ..., "seq": n}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireEvent {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routes: Option<Vec<TouristRoute>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasons: Option<Vec<String>>,
    pub seq: u64,
}

impl WireEvent {
    fn bare(kind: &str, seq: u64) -> Self {
        Self {
            kind: kind.to_string(),
            text: None,
            image_id: None,
            routes: None,
            reasons: None,
            seq,
        }
    }

    pub fn from_event(seq: u64, event: &Event, catalog: &RouteCatalog) -> Self {
        match event {
            Event::Utterance { text } => Self {
                text: Some(text.clone()),
                ..Self::bare("utterance", seq)
            },
            Event::Filler { text } => Self {
                text: Some(text.clone()),
                ..Self::bare("filler", seq)
            },
            Event::ShowImage { image_id } => Self {
                image_id: Some(image_id.clone()),
                ..Self::bare("image", seq)
            },
            Event::RouteCards { route_ids, reasons } => Self {
                routes: Some(route_ids.iter().filter_map(|id| catalog.get(id).cloned()).collect()),
                reasons: Some(reasons.clone()),
                ..Self::bare("routes", seq)
            },
            Event::End => Self::bare("end", seq),
        }
    }
}
