//! Tourist routes and the two-route recommendation.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::session::UserProfile;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTag {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TouristRoute {
    pub route_id: String,
    pub name: String,
    /// A route always visits exactly two spots.
    pub spots: [String; 2],
    pub transport: String,
    #[serde(default)]
    pub tags: Vec<RouteTag>,
    #[serde(default)]
    pub description: String,
}

impl TouristRoute {
    /// Tags whose value equals the profile's slot for the same key.
    pub fn matched_tags<'a>(&'a self, profile: &'a UserProfile) -> impl Iterator<Item = &'a RouteTag> + 'a {
        self.tags
            .iter()
            .filter(move |t| profile.get(&t.key) == Some(t.value.as_str()))
    }

    pub fn score(&self, profile: &UserProfile) -> usize {
        self.matched_tags(profile).count()
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("route catalog needs at least 2 routes, found {0}")]
    CatalogTooSmall(usize),
    #[error("duplicate route id `{0}`")]
    DuplicateRouteId(String),
    #[error("route `{0}` has an empty name or spot")]
    EmptyField(String),
    #[error("invalid routes.json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteCatalog {
    routes: Vec<TouristRoute>,
}

impl RouteCatalog {
    pub fn new(routes: Vec<TouristRoute>) -> Result<Self, CatalogError> {
        if routes.len() < 2 {
            return Err(CatalogError::CatalogTooSmall(routes.len()));
        }
        let mut seen = HashSet::new();
        for r in &routes {
            if !seen.insert(r.route_id.as_str()) {
                return Err(CatalogError::DuplicateRouteId(r.route_id.clone()));
            }
            if r.name.trim().is_empty() || r.spots.iter().any(|s| s.trim().is_empty()) {
                return Err(CatalogError::EmptyField(r.route_id.clone()));
            }
        }
        Ok(Self { routes })
    }

    /// Parse `{"routes": [...]}`.
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        #[derive(Deserialize)]
        struct File {
            routes: Vec<TouristRoute>,
        }
        let file: File = serde_json::from_str(text)?;
        Self::new(file.routes)
    }

    pub fn routes(&self) -> &[TouristRoute] {
        &self.routes
    }

    pub fn get(&self, route_id: &str) -> Option<&TouristRoute> {
        self.routes.iter().find(|r| r.route_id == route_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recommendation<'a> {
    pub first: &'a TouristRoute,
    pub second: &'a TouristRoute,
    pub reasons: Vec<String>,
}

/// Rank routes by the number of tags matching the profile and return the top
/// two (catalog order breaks ties), with one reason per matched tag.
pub fn recommend_routes<'a>(
    profile: &UserProfile,
    routes: &'a [TouristRoute],
) -> Result<Recommendation<'a>, CatalogError> {
    if routes.len() < 2 {
        return Err(CatalogError::CatalogTooSmall(routes.len()));
    }
    let mut ranked: Vec<(usize, &TouristRoute)> = routes.iter().map(|r| (r.score(profile), r)).collect();
    // Stable sort keeps catalog order among equal scores.
    ranked.sort_by(|a, b| b.0.cmp(&a.0));
    let (first, second) = (ranked[0].1, ranked[1].1);
    let reasons = [first, second]
        .into_iter()
        .flat_map(|r| r.matched_tags(profile).map(move |t| reason_sentence(t, r)))
        .collect();
    Ok(Recommendation {
        first,
        second,
        reasons,
    })
}

/// One sentence citing the collected preference behind a matched tag.
pub fn reason_sentence(tag: &RouteTag, route: &TouristRoute) -> String {
    let (v, name) = (&tag.value, &route.name);
    match tag.key.as_str() {
        "food" => format!("{v}がお好きとのことなので、「{name}」では{v}も楽しめます。"),
        "season" => format!("{v}が好きな季節とのことなので、{v}の景色がきれいな「{name}」をおすすめします。"),
        "festival_interest" => format!("{v}に興味があるとのことなので、行事の多い「{name}」をおすすめします。"),
        "holiday_style" => format!("休日は{v}派とのことなので、「{name}」が合っていると思います。"),
        "likes_driving" => format!("{v}がお好きとのことなので、「{name}」をおすすめします。"),
        "watches_tv" => format!("{v}をよくご覧になるとのことなので、番組でも紹介された「{name}」をおすすめします。"),
        "transport_pref" => format!("{v}での移動をご希望とのことなので、「{name}」が便利です。"),
        "spot_pref" => format!("{v}の観光地がお好きとのことなので、「{name}」をおすすめします。"),
        _ => format!("{v}とお聞きしたので、「{name}」をおすすめします。"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn route(id: &str, tags: &[(&str, &str)]) -> TouristRoute {
        TouristRoute {
            route_id: id.into(),
            name: format!("{id}ルート"),
            spots: [format!("{id}-a"), format!("{id}-b")],
            transport: "バス".into(),
            tags: tags
                .iter()
                .map(|(k, v)| RouteTag {
                    key: k.to_string(),
                    value: v.to_string(),
                })
                .collect(),
            description: String::new(),
        }
    }

    fn catalog() -> Vec<TouristRoute> {
        vec![
            route("r1", &[("season", "秋")]),
            route("r2", &[("spot_pref", "寺社")]),
            route("r3", &[("food", "ラーメン"), ("transport_pref", "バス")]),
            route("r4", &[("likes_driving", "ドライブ")]),
        ]
    }

    /// Oracle: score by brute force, then pick max index by (score desc, idx asc).
    fn brute_force(profile: &UserProfile, routes: &[TouristRoute]) -> (String, String) {
        let scores: Vec<usize> = routes
            .iter()
            .map(|r| r.tags.iter().filter(|t| profile.slots.get(&t.key) == Some(&t.value)).count())
            .collect();
        let mut idx: Vec<usize> = (0..routes.len()).collect();
        idx.sort_by_key(|&i| (std::cmp::Reverse(scores[i]), i));
        (routes[idx[0]].route_id.clone(), routes[idx[1]].route_id.clone())
    }

    #[test]
    fn empty_profile_takes_catalog_order() {
        let routes = catalog();
        let rec = recommend_routes(&UserProfile::default(), &routes).unwrap();
        assert_eq!((rec.first.route_id.as_str(), rec.second.route_id.as_str()), ("r1", "r2"));
        assert!(rec.reasons.is_empty());
    }

    #[test]
    fn matching_food_ranks_first() {
        let routes = catalog();
        let profile: UserProfile = [("food", "ラーメン")].into_iter().collect();
        let rec = recommend_routes(&profile, &routes).unwrap();
        assert_eq!(rec.first.route_id, "r3");
        assert_eq!(brute_force(&profile, &routes).0, "r3");
        assert!(!rec.reasons.is_empty());
        assert!(rec.reasons.iter().any(|r| r.contains("ラーメン")));
    }

    #[test]
    fn identical_tags_keep_catalog_order() {
        let routes = vec![route("a", &[("food", "寿司")]), route("b", &[("food", "寿司")]), route("c", &[])];
        let profile: UserProfile = [("food", "寿司")].into_iter().collect();
        let rec = recommend_routes(&profile, &routes).unwrap();
        assert_eq!((rec.first.route_id.as_str(), rec.second.route_id.as_str()), ("a", "b"));
        assert_eq!(rec.reasons.len(), 2);
    }

    #[test]
    fn catalog_checks() {
        assert!(matches!(
            RouteCatalog::new(vec![route("a", &[])]),
            Err(CatalogError::CatalogTooSmall(1))
        ));
        assert!(matches!(
            RouteCatalog::new(vec![route("a", &[]), route("a", &[])]),
            Err(CatalogError::DuplicateRouteId(_))
        ));
        assert!(recommend_routes(&UserProfile::default(), &catalog()[..1]).is_err());
        let json = r#"{"routes":[
            {"route_id":"x","name":"X","spots":["p","q"],"transport":"電車","tags":[{"key":"food","value":"寿司"}],"description":"d"},
            {"route_id":"y","name":"Y","spots":["p","q"],"transport":"バス","tags":[]}
        ]}"#;
        let cat = RouteCatalog::from_json(json).unwrap();
        assert_eq!(cat.get("x").unwrap().tags[0].value, "寿司");
        // Three spots is a schema error.
        assert!(RouteCatalog::from_json(r#"{"routes":[{"route_id":"x","name":"X","spots":["p","q","r"],"transport":"t"}]}"#).is_err());
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force(
            tag_sets in prop::collection::vec(prop::collection::vec((0usize..3, 0usize..3), 0..4), 2..8),
            slots in prop::collection::vec(proptest::option::of(0usize..3), 3),
        ) {
            let keys = ["food", "season", "spot_pref"];
            let values = ["A", "B", "C"];
            let routes: Vec<TouristRoute> = tag_sets
                .iter()
                .enumerate()
                .map(|(i, tags)| {
                    let tags: Vec<(&str, &str)> = tags.iter().map(|&(k, v)| (keys[k], values[v])).collect();
                    route(&format!("r{i}"), &tags)
                })
                .collect();
            let profile: UserProfile = slots
                .iter()
                .enumerate()
                .filter_map(|(k, v)| v.map(|v| (keys[k], values[v])))
                .collect();
            let rec = recommend_routes(&profile, &routes).unwrap();
            prop_assert_ne!(&rec.first.route_id, &rec.second.route_id);
            prop_assert_eq!(
                (rec.first.route_id.clone(), rec.second.route_id.clone()),
                brute_force(&profile, &routes)
            );
            let expected_reasons = rec.first.score(&profile) + rec.second.score(&profile);
            prop_assert_eq!(rec.reasons.len(), expected_reasons);
        }
    }
}
