//! Spreadsheet-driven dialogue engine for a tourist-guide robot.
//!
//! A flow sheet compiles to a [`flow::FlowGraph`]; the [`dialogue::Engine`]
//! runs sessions over it using deterministic understanding from [`nlu`] and
//! an optional chat-completion fallback from [`llm`]. [`service`] exposes
//! sessions over HTTP and [`sim`] drives scripted users through a flow.

pub mod data;
pub mod dialogue;
pub mod flow;
pub mod llm;
pub mod nlu;
pub mod service;
pub mod sim;
