//! One round from files on disk, without a server.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use super::{Engine, RoundError, SuggestionRound};
use crate::catalog::{Catalog, CatalogError, LoadOptions};
use crate::gateway::{BackendConfig, Gateway, GatewayError};
use crate::session::{ActiveChart, AudienceProfile, SessionConfig, SessionError, SessionStore, Speaker};

#[derive(Debug, Error)]
pub enum OfflineError {
    #[error("FileNotFound: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Round(#[from] RoundError),
    #[error(transparent)]
    Backend(#[from] GatewayError),
}

impl OfflineError {
    pub fn code(&self) -> &'static str {
        match self {
            OfflineError::FileNotFound(_) => "FileNotFound",
            OfflineError::Parse { .. } => "ParseError",
            OfflineError::Catalog(e) => e.code(),
            OfflineError::Session(e) => e.code(),
            OfflineError::Round(e) => e.code(),
            OfflineError::Backend(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OfflineInputs {
    pub data_dir: PathBuf,
    /// JSON array of `{speaker, text}`.
    pub transcript: PathBuf,
    pub chart: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub config: SessionConfig,
    pub backend: BackendConfig,
    pub parallelism: usize,
}

#[derive(Deserialize)]
struct Line {
    speaker: Speaker,
    text: String,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, OfflineError> {
    let bytes = std::fs::read(path).map_err(|_| OfflineError::FileNotFound(path.to_path_buf()))?;
    serde_json::from_slice(&bytes).map_err(|e| OfflineError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Builds an ephemeral session from the inputs and runs a single round.
pub async fn run_offline(inputs: &OfflineInputs) -> Result<SuggestionRound, OfflineError> {
    if !inputs.data_dir.is_dir() {
        return Err(OfflineError::FileNotFound(inputs.data_dir.clone()));
    }
    let catalog = Arc::new(Catalog::load_dir(&inputs.data_dir, &LoadOptions::default())?);
    let lines: Vec<Line> = read_json(&inputs.transcript)?;
    let chart: Option<ActiveChart> = inputs.chart.as_deref().map(read_json).transpose()?;
    let profile: Option<serde_json::Value> = inputs.profile.as_deref().map(read_json).transpose()?;

    let sessions = Arc::new(SessionStore::new(None));
    let id = sessions.create(inputs.config)?;
    for line in &lines {
        sessions.append_utterance(&id, line.speaker, &line.text)?;
    }
    if let Some(chart) = chart {
        sessions.set_active_chart(&id, chart, &catalog)?;
    }
    if let Some(profile) = profile {
        sessions.set_profile(&id, AudienceProfile::from_json(&profile)?)?;
    }

    let gateway = Arc::new(Gateway::new(inputs.backend.build()?));
    let engine = Engine::new(catalog, gateway, sessions).with_parallelism(inputs.parallelism);
    Ok(engine.run_round(&id).await?)
}
