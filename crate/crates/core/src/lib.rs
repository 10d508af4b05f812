//! Suggestion engine for live data presentations.
//!
//! A round turns the current presentation context (datasets, the chart on
//! screen, the recent conversation and the audience profile) into a ranked
//! list of validated Vega-Lite candidates.

pub mod catalog;
pub mod gateway;
pub mod orchestrator;
pub mod session;
pub mod stages;

/// Bumped whenever a stage prompt changes; part of every cache key.
pub const PROMPT_VERSION: &str = "v1";
