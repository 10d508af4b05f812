//! Stage 1: topic, key points, audience interests and objectives.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use super::{describe_datasets, describe_profile, object, string_list, text_field};
use crate::gateway::{Stage, StagePrompt};
use crate::session::{ActiveChart, SessionSnapshot, Speaker};

pub const SHAPE: &str = "ContextAnalysis";
pub const MAX_ITEMS: usize = 5;
pub const NO_CHART_MARKER: &str = "[no chart displayed]";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("InsufficientContext: the session has no utterances and no active chart")]
pub struct InsufficientContext;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextAnalysis {
    pub topic: String,
    pub key_points: Vec<String>,
    pub audience_interests: Vec<String>,
    pub objectives: Vec<String>,
    /// Set when a list was longer than its bound and got cut.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

const SYSTEM: &str = "You analyze a live data presentation. Read the conversation, the chart on \
screen, the available datasets and the audience profile. Reply with one JSON object: \
{\"topic\": string, \"keyPoints\": [1-5 strings], \"audienceInterests\": [0-5 strings], \
\"objectives\": [1-5 imperative phrases saying what a visualization should achieve]}. \
Reply with JSON only.";

/// One-line structural summary of the chart on screen.
pub fn summarize_chart(chart: Option<&ActiveChart>) -> String {
    let Some(chart) = chart else {
        return NO_CHART_MARKER.to_string();
    };
    if let Some(table) = &chart.table {
        return format!(
            "table \"{}\" of dataset `{}` with columns {}",
            chart.title,
            chart.dataset_id,
            table.columns.join(", ")
        );
    }
    let mark = match &chart.spec["mark"] {
        Json::String(s) => s.clone(),
        other => other["type"].as_str().unwrap_or("?").to_string(),
    };
    let mut fields = Vec::new();
    if let Some(encoding) = chart.spec["encoding"].as_object() {
        for (channel, def) in encoding {
            if let Some(field) = def["field"].as_str() {
                fields.push(format!("{channel}={field}"));
            }
        }
    }
    format!(
        "{mark} chart \"{}\" of dataset `{}` encoding {}",
        chart.title,
        chart.dataset_id,
        fields.join(", ")
    )
}

pub fn build_prompt(snapshot: &SessionSnapshot) -> Result<StagePrompt, InsufficientContext> {
    if snapshot.transcript_window.is_empty() && snapshot.active_chart.is_none() {
        return Err(InsufficientContext);
    }
    let mut user = String::new();
    let _ = writeln!(user, "Conversation (oldest first):");
    if snapshot.transcript_window.is_empty() {
        let _ = writeln!(user, "  (nothing said yet)");
    }
    for u in &snapshot.transcript_window {
        let who = match u.speaker {
            Speaker::Presenter => "presenter",
            Speaker::Audience => "audience",
        };
        let _ = writeln!(user, "  [{}] {who}: {}", u.seq, u.text);
    }
    let _ = writeln!(user, "\nActive chart: {}", summarize_chart(snapshot.active_chart.as_ref()));
    let _ = writeln!(user, "\nDatasets:\n{}", describe_datasets(&snapshot.datasets));
    let _ = writeln!(user, "Audience: {}", describe_profile(&snapshot.audience_profile));
    Ok(StagePrompt::new(Stage::Analysis, SHAPE, SYSTEM.to_string(), user))
}

fn bounded(items: Vec<String>, truncated: &mut bool) -> Vec<String> {
    if items.len() > MAX_ITEMS {
        *truncated = true;
        items.into_iter().take(MAX_ITEMS).collect()
    } else {
        items
    }
}

/// Shape-checks a reply. Over-long lists are cut to the bound and flagged.
pub fn parse(value: &Json) -> Result<ContextAnalysis, String> {
    let map = object(value, "analysis")?;
    let topic = text_field(map, "topic")?;
    let mut truncated = false;
    let key_points = string_list(map, "keyPoints")?.ok_or("missing `keyPoints`")?;
    if key_points.is_empty() {
        return Err("`keyPoints` needs at least one entry".into());
    }
    let objectives = string_list(map, "objectives")?.ok_or("missing `objectives`")?;
    if objectives.is_empty() {
        return Err("`objectives` needs at least one entry".into());
    }
    let audience_interests = string_list(map, "audienceInterests")?.unwrap_or_default();
    Ok(ContextAnalysis {
        topic,
        key_points: bounded(key_points, &mut truncated),
        audience_interests: bounded(audience_interests, &mut truncated),
        objectives: bounded(objectives, &mut truncated),
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{AudienceProfile, SessionConfig, Utterance};
    use proptest::prelude::*;
    use serde_json::json;

    fn snapshot(utterances: &[&str]) -> SessionSnapshot {
        SessionSnapshot {
            session_id: "s".into(),
            config: SessionConfig::default(),
            datasets: Vec::new(),
            active_chart: None,
            transcript_window: utterances
                .iter()
                .enumerate()
                .map(|(i, t)| Utterance {
                    seq: i as u64 + 1,
                    speaker: Speaker::Presenter,
                    text: t.to_string(),
                    timestamp_ms: 0,
                })
                .collect(),
            audience_profile: AudienceProfile::default(),
            prompt_version: crate::PROMPT_VERSION.into(),
            round_count: 0,
        }
    }

    #[test]
    fn empty_session_is_insufficient() {
        assert_eq!(build_prompt(&snapshot(&[])).unwrap_err(), InsufficientContext);
    }

    #[test]
    fn prompt_embeds_transcript_and_no_chart_marker() {
        let p = build_prompt(&snapshot(&["let's focus on the most recent 20 years"])).unwrap();
        assert!(p.user.contains("most recent 20 years"));
        assert!(p.user.contains(NO_CHART_MARKER));
        assert_eq!(p.stage, Stage::Analysis);
    }

    #[test]
    fn empty_topic_is_invalid() {
        assert!(parse(&json!({"topic": ""})).is_err());
    }

    #[test]
    fn long_lists_are_truncated() {
        let a = parse(&json!({
            "topic": "t",
            "keyPoints": ["1","2","3","4","5","6","7","8","9"],
            "objectives": ["o"]
        }))
        .unwrap();
        assert_eq!(a.key_points.len(), 5);
        assert!(a.truncated);
        assert!(a.audience_interests.is_empty());
    }

    fn arb_json() -> impl Strategy<Value = Json> {
        let leaf = prop_oneof![
            Just(Json::Null),
            any::<bool>().prop_map(Json::from),
            any::<i32>().prop_map(Json::from),
            "[a-z ]{0,6}".prop_map(Json::from),
        ];
        let value = leaf.prop_recursive(2, 16, 10, |inner| prop::collection::vec(inner, 0..10).prop_map(Json::from));
        let key = prop_oneof![
            Just("topic".to_string()),
            Just("keyPoints".to_string()),
            Just("audienceInterests".to_string()),
            Just("objectives".to_string()),
            "[a-z]{1,4}",
        ];
        prop::collection::btree_map(key, value, 0..6).prop_map(|m| Json::Object(m.into_iter().collect()))
    }

    proptest! {
        #[test]
        fn accepted_values_satisfy_bounds(v in arb_json()) {
            if let Ok(a) = parse(&v) {
                prop_assert!(!a.topic.trim().is_empty());
                prop_assert!((1..=MAX_ITEMS).contains(&a.key_points.len()));
                prop_assert!((1..=MAX_ITEMS).contains(&a.objectives.len()));
                prop_assert!(a.audience_interests.len() <= MAX_ITEMS);
                prop_assert!(a.key_points.iter().chain(&a.objectives).all(|s| !s.trim().is_empty()));
                prop_assert_eq!(parse(&v).unwrap(), a);
            }
        }
    }
}
