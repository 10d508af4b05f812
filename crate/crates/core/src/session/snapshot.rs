use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, DatasetSummary};

use super::{ActiveChart, AudienceProfile, SessionConfig, SessionState, Utterance};

/// The four context inputs of a round, frozen at round start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionSnapshot {
    pub session_id: String,
    pub config: SessionConfig,
    pub datasets: Vec<DatasetSummary>,
    pub active_chart: Option<ActiveChart>,
    pub transcript_window: Vec<Utterance>,
    pub audience_profile: AudienceProfile,
    pub prompt_version: String,
    /// Rounds already recorded when the snapshot was taken.
    pub round_count: usize,
}

impl SessionState {
    pub fn snapshot(&self, catalog: &Catalog) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.id.clone(),
            config: self.config,
            datasets: catalog.summaries(),
            active_chart: self.active_chart.clone(),
            transcript_window: self.transcript_window().to_vec(),
            audience_profile: self.profile.clone(),
            prompt_version: crate::PROMPT_VERSION.to_string(),
            round_count: self.rounds.len(),
        }
    }
}

impl SessionSnapshot {
    pub fn dataset(&self, id: &str) -> Option<&DatasetSummary> {
        self.datasets.iter().find(|d| d.id == id)
    }
}
