//! Stage 5: rubric scoring of drafts, final scores and ranking.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::analysis::ContextAnalysis;
use super::generation::CandidateDraft;
use super::selection::DataSelection;
use super::vega::ValidationReport;
use super::{describe_profile, object};
use crate::gateway::{Stage, StagePrompt};
use crate::session::{ActiveChart, AudienceProfile, Provenance, TableView};

pub const SHAPE: &str = "RubricScores";
pub const LOW_DIVERSITY_PENALTY: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RubricScores {
    pub relevance: u32,
    pub audience_fit: u32,
    pub data_validity: u32,
    pub justification: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clamped: bool,
}

impl RubricScores {
    pub fn zero() -> Self {
        Self {
            relevance: 0,
            audience_fit: 0,
            data_validity: 0,
            justification: String::new(),
            clamped: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SpecSource {
    Llm,
    Template,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Flag {
    EvalFailed,
    EvalRepaired,
    RubricClamped,
    SpecRepaired,
    LowDiversity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoredCandidate {
    pub candidate_id: String,
    pub dataset_id: String,
    pub draft: CandidateDraft,
    pub rubric: RubricScores,
    pub final_score: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_view: Option<TableView>,
    pub spec_source: SpecSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(default)]
    pub flags: Vec<Flag>,
}

impl ScoredCandidate {
    pub fn has_flag(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }

    /// The chart shown after adopting this candidate, if it is renderable.
    pub fn to_active_chart(&self, round_id: &str) -> Option<ActiveChart> {
        if self.is_unrenderable() {
            return None;
        }
        Some(ActiveChart {
            spec: self.spec.clone().unwrap_or(Json::Null),
            table: self.table_view.clone(),
            dataset_id: self.dataset_id.clone(),
            title: self.draft.title.clone(),
            provenance: Provenance::Adopted {
                round_id: round_id.to_string(),
                candidate_id: self.candidate_id.clone(),
                rationale: self.draft.rationale.clone(),
            },
        })
    }

    /// Neither a usable spec nor a table view.
    pub fn is_unrenderable(&self) -> bool {
        self.spec.is_none() && self.table_view.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Exclusion {
    pub candidate_id: String,
    pub index: usize,
    pub reason: String,
}

const SYSTEM: &str = "You score one visualization draft for a live presentation. Judge how well \
it serves the discussion (relevance), suits the audience (audienceFit), and represents the data \
faithfully (dataValidity). Reply with one JSON object {\"relevance\": 0-100, \"audienceFit\": \
0-100, \"dataValidity\": 0-100, \"justification\": string}. Reply with JSON only.";

pub fn build_prompt(
    draft: &CandidateDraft,
    analysis: &ContextAnalysis,
    selection: &DataSelection,
    profile: &AudienceProfile,
) -> StagePrompt {
    let mut user = String::new();
    let _ = writeln!(user, "Topic: {}", analysis.topic);
    let _ = writeln!(user, "Objectives: {}", analysis.objectives.join("; "));
    let _ = writeln!(user, "Audience: {}", describe_profile(profile));
    let _ = writeln!(
        user,
        "Selection: dataset `{}` columns {}",
        selection.dataset_id,
        selection.columns.join(", ")
    );
    let _ = writeln!(user, "Draft: {}", serde_json::to_string(draft).unwrap_or_default());
    StagePrompt::new(Stage::Evaluation, SHAPE, SYSTEM.to_string(), user).with_slot(draft.index)
}

fn score(map: &serde_json::Map<String, Json>, key: &str, clamped: &mut bool) -> Result<u32, String> {
    let n = map
        .get(key)
        .and_then(Json::as_f64)
        .filter(|n| n.is_finite())
        .ok_or_else(|| format!("`{key}` must be a number"))?;
    let rounded = n.round();
    if !(0.0..=100.0).contains(&rounded) {
        *clamped = true;
    }
    Ok(rounded.clamp(0.0, 100.0) as u32)
}

/// Scores outside 0..=100 are clamped and flagged.
pub fn parse(value: &Json) -> Result<RubricScores, String> {
    let map = object(value, "rubric")?;
    let mut clamped = false;
    let relevance = score(map, "relevance", &mut clamped)?;
    let audience_fit = score(map, "audienceFit", &mut clamped)?;
    let data_validity = score(map, "dataValidity", &mut clamped)?;
    let justification = map
        .get("justification")
        .and_then(Json::as_str)
        .unwrap_or_default()
        .trim()
        .to_string();
    Ok(RubricScores {
        relevance,
        audience_fit,
        data_validity,
        justification,
        clamped,
    })
}

/// `round(0.5 r + 0.3 a + 0.2 d)`, half up, in integer arithmetic; minus
/// the low-diversity penalty when it applies; never below zero.
pub fn final_score(rubric: &RubricScores, penalized: bool) -> u32 {
    let weighted = (5 * rubric.relevance + 3 * rubric.audience_fit + 2 * rubric.data_validity + 5) / 10;
    if penalized {
        weighted.saturating_sub(LOW_DIVERSITY_PENALTY)
    } else {
        weighted
    }
}

/// Descending score, ties by ascending generation index. Candidates with
/// neither spec nor table view are excluded with a record.
pub fn rank(candidates: Vec<ScoredCandidate>) -> (Vec<ScoredCandidate>, Vec<Exclusion>) {
    let (mut ranked, unrenderable): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|c| !c.is_unrenderable());
    ranked.sort_by(|a, b| {
        b.final_score
            .cmp(&a.final_score)
            .then(a.draft.index.cmp(&b.draft.index))
    });
    let mut excluded: Vec<Exclusion> = unrenderable
        .into_iter()
        .map(|c| Exclusion {
            candidate_id: c.candidate_id,
            index: c.draft.index,
            reason: "no valid spec from the model or the template compiler".into(),
        })
        .collect();
    excluded.sort_by_key(|e| e.index);
    (ranked, excluded)
}
