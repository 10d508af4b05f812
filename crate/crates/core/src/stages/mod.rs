//! The five pipeline stages. Each stage builds a [`StagePrompt`], parses and
//! shape-checks the model reply, and applies its deterministic rules.
//!
//! [`StagePrompt`]: crate::gateway::StagePrompt

pub mod analysis;
pub mod evaluation;
pub mod generation;
pub mod selection;
pub mod vega;

use std::fmt::Write as _;

use serde_json::{Map, Value as Json};

use crate::catalog::{ColumnStats, DatasetSummary, TableSchema};
use crate::session::AudienceProfile;

pub(crate) fn object<'a>(value: &'a Json, what: &str) -> Result<&'a Map<String, Json>, String> {
    value
        .as_object()
        .ok_or_else(|| format!("{what} must be a JSON object"))
}

/// Required non-empty string field, trimmed.
pub(crate) fn text_field(map: &Map<String, Json>, key: &str) -> Result<String, String> {
    match map.get(key) {
        Some(Json::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        Some(Json::String(_)) => Err(format!("`{key}` must not be empty")),
        Some(_) => Err(format!("`{key}` must be a string")),
        None => Err(format!("missing `{key}`")),
    }
}

/// List of non-empty strings; blank entries are skipped. `None` when absent.
pub(crate) fn string_list(map: &Map<String, Json>, key: &str) -> Result<Option<Vec<String>>, String> {
    let Some(value) = map.get(key) else {
        return Ok(None);
    };
    let items = value
        .as_array()
        .ok_or_else(|| format!("`{key}` must be an array of strings"))?;
    items
        .iter()
        .filter_map(|item| match item {
            Json::String(s) if s.trim().is_empty() => None,
            Json::String(s) => Some(Ok(s.trim().to_string())),
            _ => Some(Err(format!("`{key}` must contain only strings"))),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

pub(crate) fn truncate_chars(s: &str, max: usize) -> (String, bool) {
    match s.char_indices().nth(max) {
        Some((i, _)) => (s[..i].trim_end().to_string(), true),
        None => (s.to_string(), false),
    }
}

pub(crate) fn describe_profile(profile: &AudienceProfile) -> String {
    let level = |l| serde_json::to_value(l).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    format!(
        "expertise={}, domainFamiliarity={}, interests=[{}]",
        level(profile.expertise),
        level(profile.domain_familiarity),
        profile.interests.join(", ")
    )
}

fn describe_stats(stats: &ColumnStats) -> String {
    let mut out = String::new();
    if let (Some(min), Some(max)) = (&stats.min, &stats.max) {
        let _ = write!(out, " range [{min}, {max}]");
    }
    let _ = write!(out, " distinct {} nulls {}", stats.distinct_count, stats.null_count);
    out
}

pub(crate) fn describe_schema(schema: &TableSchema, summary: Option<&DatasetSummary>) -> String {
    let mut out = String::new();
    for column in &schema.columns {
        let _ = write!(out, "  - {} ({})", column.name, column.role.as_str());
        if let Some(stats) = summary.and_then(|s| s.stats.get(&column.name)) {
            out.push_str(&describe_stats(stats));
        }
        out.push('\n');
    }
    out
}

pub(crate) fn describe_datasets(datasets: &[DatasetSummary]) -> String {
    let mut out = String::new();
    for ds in datasets {
        let _ = writeln!(out, "dataset `{}` ({} rows):", ds.id, ds.row_count);
        out.push_str(&describe_schema(&ds.schema, Some(ds)));
    }
    out
}
