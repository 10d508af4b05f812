//! Stage 3: one call asking for `n` drafts, then shape, column, dedupe and
//! diversity checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::analysis::ContextAnalysis;
use super::selection::DataSelection;
use super::{describe_profile, describe_schema, object, text_field, truncate_chars};
use crate::catalog::{chain_schema, parse_transforms, AggregateFn, DatasetSummary, Role, TableSchema, Transform};
use crate::gateway::{Stage, StagePrompt};
use crate::session::AudienceProfile;

pub const SHAPE: &str = "CandidateDrafts";
pub const MAX_TITLE_CHARS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartType {
    Line,
    Bar,
    Pie,
    Scatter,
    Table,
}

impl ChartType {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "line" => ChartType::Line,
            "bar" => ChartType::Bar,
            "pie" => ChartType::Pie,
            "scatter" => ChartType::Scatter,
            "table" => ChartType::Table,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChartType::Line => "line",
            ChartType::Bar => "bar",
            ChartType::Pie => "pie",
            ChartType::Scatter => "scatter",
            ChartType::Table => "table",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    X,
    Y,
    Color,
    Theta,
}

impl Channel {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "x" => Channel::X,
            "y" => Channel::Y,
            "color" => Channel::Color,
            "theta" => Channel::Theta,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Color => "color",
            Channel::Theta => "theta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EncodingRef {
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate_fn: Option<AggregateFn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CandidateDraft {
    pub index: usize,
    pub chart_type: ChartType,
    pub title: String,
    #[serde(default)]
    pub encoding: BTreeMap<Channel, EncodingRef>,
    /// Table drafts only: the columns shown.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    #[serde(default)]
    pub transforms: Vec<Transform>,
    pub rationale: String,
}

impl CandidateDraft {
    pub fn id(&self) -> String {
        candidate_id(self.index)
    }

    /// Equal keys mean the same visualization.
    pub fn dedupe_key(&self) -> String {
        serde_json::to_string(&(self.chart_type, &self.encoding, &self.columns, &self.transforms)).unwrap_or_default()
    }
}

pub fn candidate_id(index: usize) -> String {
    format!("cand-{index}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DroppedDraft {
    /// Position in the model's list.
    pub position: usize,
    pub reason: String,
}

/// Valid drafts in model order, with their original list positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDrafts {
    pub valid: Vec<(usize, CandidateDraft)>,
    pub dropped: Vec<DroppedDraft>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Generation {
    pub drafts: Vec<CandidateDraft>,
    pub low_diversity: bool,
    /// Types that had more drafts than the per-type cap.
    pub overflow_types: Vec<ChartType>,
    pub dropped: Vec<DroppedDraft>,
}

impl Generation {
    /// Whether `draft` is subject to the low-diversity penalty.
    pub fn penalized(&self, draft: &CandidateDraft) -> bool {
        self.low_diversity && self.overflow_types.contains(&draft.chart_type)
    }
}

const SYSTEM: &str = "You propose visualization candidates for a live presentation. Reply with \
one JSON object {\"drafts\": [...]} where each draft is {\"chartType\": \"line\"|\"bar\"|\"pie\"|\
\"scatter\"|\"table\", \"title\": string, \"encoding\": {channel: {\"column\": string, \
\"aggregateFn\"?: \"sum\"|\"mean\"|\"count\"|\"min\"|\"max\"}}, \"columns\"?: [string], \
\"transforms\": [transform], \"rationale\": string}. Channels are x, y, color and theta. line, \
bar and scatter need x and y; pie needs theta and color; table lists columns and has no \
encoding. Transforms are limited to: filter {column, predicate: {range: [lo, hi]} | \
{oneOf: [values]}}, aggregate {groupBy, measures: [{column, fn}]}, timeUnit {column, unit: \
year|quarter|month}, bin {column, maxBins <= 20}, sort {column, direction}, topK {k}, \
windowDelta {column, mode: difference|percentChange, lag: 1}. Derived columns are named \
{fn}_{column}, {unit}_{column}, bin_{column}, delta_{column} and pct_change_{column}. \
Generate a range of visualization types. Each rationale says how the chart serves the \
conversation. Reply with JSON only.";

pub fn build_prompt(
    analysis: &ContextAnalysis,
    selection: &DataSelection,
    summary: &DatasetSummary,
    profile: &AudienceProfile,
    n: usize,
) -> StagePrompt {
    let schema = selection.schema(summary);
    let mut user = String::new();
    let _ = writeln!(user, "Produce {n} drafts.");
    let _ = writeln!(user, "Topic: {}", analysis.topic);
    let _ = writeln!(user, "Key points: {}", analysis.key_points.join("; "));
    let _ = writeln!(user, "Objectives: {}", analysis.objectives.join("; "));
    let _ = writeln!(user, "Audience: {}", describe_profile(profile));
    let _ = writeln!(user, "\nDataset `{}` columns:\n{}", selection.dataset_id, describe_schema(&schema, Some(summary)));
    for r in &selection.ranges {
        let _ = writeln!(user, "Suggested range: {} in [{}, {}]", r.column, r.lo, r.hi);
    }
    if !selection.selection_rationale.is_empty() {
        let _ = writeln!(user, "Selection rationale: {}", selection.selection_rationale);
    }
    StagePrompt::new(Stage::Generation, SHAPE, SYSTEM.to_string(), user)
}

fn required_channels(chart: ChartType) -> (&'static [Channel], &'static [Channel]) {
    use Channel::*;
    match chart {
        ChartType::Line | ChartType::Bar | ChartType::Scatter => (&[X, Y], &[X, Y, Color]),
        ChartType::Pie => (&[Theta, Color], &[Theta, Color]),
        ChartType::Table => (&[], &[]),
    }
}

/// Parses and checks one draft against the selection schema.
pub fn parse_draft(value: &Json, schema: &TableSchema) -> Result<CandidateDraft, String> {
    let map = object(value, "draft")?;
    let chart_type = match map.get("chartType") {
        Some(Json::String(s)) => ChartType::parse(s).ok_or_else(|| format!("unknown chartType `{s}`"))?,
        _ => return Err("missing `chartType`".into()),
    };
    let (title, _) = truncate_chars(&text_field(map, "title")?, MAX_TITLE_CHARS);
    let rationale = text_field(map, "rationale")?;
    let transforms = match map.get("transforms") {
        None | Some(Json::Null) => Vec::new(),
        Some(v) => parse_transforms(v).map_err(|e| e.to_string())?,
    };
    let output = chain_schema(schema, &transforms).map_err(|e| e.to_string())?;
    let resolve = |column: &str| {
        output
            .column(column)
            .ok_or_else(|| format!("column `{column}` is not in the selection"))
    };

    let mut encoding = BTreeMap::new();
    match map.get("encoding") {
        None | Some(Json::Null) => {}
        Some(Json::Object(channels)) => {
            for (name, def) in channels {
                let channel = Channel::parse(name).ok_or_else(|| format!("unknown channel `{name}`"))?;
                let def = object(def, "encoding channel")?;
                let column = text_field(def, "column")?;
                let aggregate_fn = match def.get("aggregateFn") {
                    None | Some(Json::Null) => None,
                    Some(Json::String(s)) => {
                        Some(AggregateFn::parse(s).ok_or_else(|| format!("unknown aggregateFn `{s}`"))?)
                    }
                    Some(_) => return Err("`aggregateFn` must be a string".into()),
                };
                let desc = resolve(&column)?;
                if aggregate_fn.is_some_and(|f| f != AggregateFn::Count) && desc.role != Role::Quantitative {
                    return Err(format!("cannot aggregate {} column `{column}`", desc.role.as_str()));
                }
                encoding.insert(channel, EncodingRef { column, aggregate_fn });
            }
        }
        Some(_) => return Err("`encoding` must be an object".into()),
    }
    let (required, allowed) = required_channels(chart_type);
    if let Some(c) = required.iter().find(|c| !encoding.contains_key(c)) {
        return Err(format!("{} draft needs channel `{}`", chart_type.as_str(), c.as_str()));
    }
    if let Some(c) = encoding.keys().find(|c| !allowed.contains(c)) {
        return Err(format!("{} draft cannot use channel `{}`", chart_type.as_str(), c.as_str()));
    }

    let mut columns = Vec::new();
    if chart_type == ChartType::Table {
        columns = super::string_list(map, "columns")?.unwrap_or_default();
        if columns.is_empty() {
            return Err("table draft needs at least one column".into());
        }
        for c in &columns {
            resolve(c)?;
        }
    }
    Ok(CandidateDraft {
        index: 0,
        chart_type,
        title,
        encoding,
        columns,
        transforms,
        rationale,
    })
}

/// Accepts `{"drafts": [...]}` or a bare array. Fails only when no draft
/// survives, so the gateway asks for a repair.
pub fn parse(value: &Json, schema: &TableSchema) -> Result<ParsedDrafts, String> {
    let items = match value {
        Json::Array(items) => items,
        Json::Object(map) => map
            .get("drafts")
            .and_then(Json::as_array)
            .ok_or("missing `drafts` array")?,
        _ => return Err("drafts must be an array".into()),
    };
    let mut parsed = ParsedDrafts {
        valid: Vec::new(),
        dropped: Vec::new(),
    };
    for (position, item) in items.iter().enumerate() {
        match parse_draft(item, schema) {
            Ok(d) => parsed.valid.push((position, d)),
            Err(reason) => parsed.dropped.push(DroppedDraft { position, reason }),
        }
    }
    if parsed.valid.is_empty() {
        let reasons: Vec<String> = parsed.dropped.iter().map(|d| format!("#{}: {}", d.position, d.reason)).collect();
        return Err(format!("no valid drafts ({})", reasons.join("; ")));
    }
    Ok(parsed)
}

/// Type counts above `ceil(n/2)` are cut from the end; for `n >= 4`, fewer
/// than three surviving types sets `low_diversity`.
pub fn enforce_diversity(drafts: Vec<CandidateDraft>, n: usize) -> (Vec<CandidateDraft>, bool, Vec<ChartType>) {
    if n < 4 {
        return (drafts, false, Vec::new());
    }
    let cap = n.div_ceil(2);
    let mut counts: BTreeMap<ChartType, usize> = BTreeMap::new();
    let mut overflow = BTreeSet::new();
    let mut kept = Vec::new();
    for d in drafts {
        let count = counts.entry(d.chart_type).or_default();
        *count += 1;
        if *count > cap {
            overflow.insert(d.chart_type);
        } else {
            kept.push(d);
        }
    }
    kept.truncate(n);
    let distinct: BTreeSet<ChartType> = kept.iter().map(|d| d.chart_type).collect();
    (kept, distinct.len() < 3, overflow.into_iter().collect())
}

/// Dedupe, diversity and truncation to `n`; survivors are re-indexed
/// `0..` in model order.
pub fn finalize(parsed: ParsedDrafts, n: usize) -> Generation {
    let mut dropped = parsed.dropped;
    let mut seen = BTreeSet::new();
    let mut unique = Vec::new();
    for (position, draft) in parsed.valid {
        if seen.insert(draft.dedupe_key()) {
            unique.push(draft);
        } else {
            dropped.push(DroppedDraft {
                position,
                reason: "duplicate".into(),
            });
        }
    }
    let (kept, low_diversity, overflow_types) = enforce_diversity(unique, n);
    let mut drafts = kept;
    drafts.truncate(n);
    for (i, d) in drafts.iter_mut().enumerate() {
        d.index = i;
    }
    dropped.sort_by_key(|d| d.position);
    Generation {
        drafts,
        low_diversity,
        overflow_types,
        dropped,
    }
}
