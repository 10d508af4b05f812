use serde::{Deserialize, Serialize};

use crate::stages::analysis::ContextAnalysis;
use crate::stages::evaluation::{Exclusion, ScoredCandidate};
use crate::stages::generation::DroppedDraft;
use crate::stages::selection::DataSelection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundStatus {
    Complete,
    Partial,
    Failed,
}

/// Wall-clock milliseconds. `evaluation` and `specgen` are the slowest
/// single candidate call; `fanout` spans the whole candidate phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageTimings {
    pub analysis: u64,
    pub selection: u64,
    pub generation: u64,
    pub evaluation: u64,
    pub specgen: u64,
    pub fanout: u64,
    pub total: u64,
}

/// Per stage: every invocation in the round was served from the cache.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CacheHits {
    pub analysis: bool,
    pub selection: bool,
    pub generation: bool,
    pub specgen: bool,
    pub evaluation: bool,
}

impl CacheHits {
    pub fn all(&self) -> bool {
        self.analysis && self.selection && self.generation && self.specgen && self.evaluation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SuggestionRound {
    pub round_id: String,
    /// Digest of the four context inputs the round ran on.
    pub snapshot_ref: String,
    pub status: RoundStatus,
    pub candidate_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<ContextAnalysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<DataSelection>,
    pub ranked: Vec<ScoredCandidate>,
    pub excluded: Vec<Exclusion>,
    #[serde(default)]
    pub dropped_drafts: Vec<DroppedDraft>,
    #[serde(default)]
    pub low_diversity: bool,
    pub timings: StageTimings,
    pub cache_hits: CacheHits,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SuggestionRound {
    pub fn candidate(&self, candidate_id: &str) -> Option<&ScoredCandidate> {
        self.ranked.iter().find(|c| c.candidate_id == candidate_id)
    }

    pub fn is_excluded(&self, candidate_id: &str) -> bool {
        self.excluded.iter().any(|e| e.candidate_id == candidate_id)
    }

    /// The report without its id, timings and cache telemetry, which vary
    /// between otherwise identical runs.
    pub fn content(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).unwrap_or_default();
        if let Some(map) = v.as_object_mut() {
            map.remove("roundId");
            map.remove("timings");
            map.remove("cacheHits");
        }
        v
    }
}
