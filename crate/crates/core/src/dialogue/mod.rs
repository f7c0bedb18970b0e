//! Session execution over a compiled flow.

mod engine;
mod events;
mod routes;
mod session;

pub use engine::{check_resources, evaluate_condition, select_topic, Engine, EngineError, StepError};
pub use events::{Event, EventSink, NoSink, TurnOutput};
pub use routes::{reason_sentence, recommend_routes, CatalogError, Recommendation, RouteCatalog, RouteTag, TouristRoute};
pub use session::{HistoryEntry, Session, Speaker, UserProfile};
