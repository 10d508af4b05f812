//! Oracles and fixture helpers shared by integration tests, the acceptance
//! suite and the benches. Nothing here is used by production code.

pub mod gen;
pub mod reference;

use std::path::PathBuf;

/// Repository-level `fixtures/` directory.
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .expect("fixtures directory exists")
}

pub fn data_dir() -> PathBuf {
    fixtures_dir().join("data")
}

pub fn climate_scenario_dir() -> PathBuf {
    fixtures_dir().join("scenarios/climate")
}

pub fn climate_session_dir() -> PathBuf {
    fixtures_dir().join("session/climate")
}

pub mod scenario;

#[derive(Debug, Clone, serde::Deserialize)]
pub struct InvalidCase {
    pub name: String,
    /// Error codes the validator must report, sorted by name.
    pub expected: Vec<String>,
    pub spec: serde_json::Value,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct InvalidCorpus {
    pub schema: cuechart_core::catalog::TableSchema,
    pub cases: Vec<InvalidCase>,
}

/// The annotated invalid-spec corpus under `fixtures/validator/`.
pub fn invalid_corpus() -> InvalidCorpus {
    let path = fixtures_dir().join("validator/invalid.json");
    let text = std::fs::read_to_string(&path).expect("corpus exists");
    serde_json::from_str(&text).expect("corpus parses")
}
