//! Stage 2: target dataset, relevant columns and ranges, checked against the
//! catalog.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use super::analysis::ContextAnalysis;
use super::{describe_datasets, object, text_field};
use crate::catalog::{DatasetSummary, TableSchema};
use crate::gateway::{Stage, StagePrompt};

pub const SHAPE: &str = "DataSelection";
pub const MAX_COLUMNS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("EmptyCatalog: no datasets are loaded")]
    EmptyCatalog,
    #[error("UnknownDataset: `{0}`")]
    UnknownDataset(String),
    #[error("NoValidColumns: none of the selected columns exist in `{0}`")]
    NoValidColumns(String),
}

impl SelectionError {
    pub fn code(&self) -> &'static str {
        match self {
            SelectionError::EmptyCatalog => "EmptyCatalog",
            SelectionError::UnknownDataset(_) => "UnknownDataset",
            SelectionError::NoValidColumns(_) => "NoValidColumns",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub column: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DataSelection {
    pub dataset_id: String,
    pub columns: Vec<String>,
    #[serde(default)]
    pub ranges: Vec<Range>,
    #[serde(default)]
    pub selection_rationale: String,
}

impl DataSelection {
    /// Schema of the selected columns, in selection order.
    pub fn schema(&self, summary: &DatasetSummary) -> TableSchema {
        summary.schema.project(&self.columns)
    }
}

const SYSTEM: &str = "You pick the data for the next visualization. Given the analysis of the \
presentation and the dataset catalog, reply with one JSON object: {\"datasetId\": string, \
\"columns\": [1-6 column names], \"ranges\": [{\"column\": string, \"lo\": number, \"hi\": number}], \
\"selectionRationale\": string}. Ranges apply only to quantitative or temporal columns. \
Reply with JSON only.";

pub fn build_prompt(analysis: &ContextAnalysis, datasets: &[DatasetSummary]) -> Result<StagePrompt, SelectionError> {
    if datasets.is_empty() {
        return Err(SelectionError::EmptyCatalog);
    }
    let mut user = String::new();
    let _ = writeln!(user, "Topic: {}", analysis.topic);
    let _ = writeln!(user, "Key points: {}", analysis.key_points.join("; "));
    let _ = writeln!(user, "Objectives: {}", analysis.objectives.join("; "));
    if !analysis.audience_interests.is_empty() {
        let _ = writeln!(user, "Audience interests: {}", analysis.audience_interests.join("; "));
    }
    let _ = writeln!(user, "\nCatalog:\n{}", describe_datasets(datasets));
    Ok(StagePrompt::new(Stage::Selection, SHAPE, SYSTEM.to_string(), user))
}

/// Shape check only; catalog checks happen in [`validate`].
pub fn parse(value: &Json) -> Result<DataSelection, String> {
    let map = object(value, "selection")?;
    let dataset_id = text_field(map, "datasetId")?;
    let columns = super::string_list(map, "columns")?.ok_or("missing `columns`")?;
    if columns.is_empty() {
        return Err("`columns` needs at least one entry".into());
    }
    let mut ranges = Vec::new();
    if let Some(raw) = map.get("ranges") {
        let items = raw.as_array().ok_or("`ranges` must be an array")?;
        for item in items {
            let r = object(item, "range")?;
            let column = text_field(r, "column")?;
            let num = |k: &str| {
                r.get(k)
                    .and_then(Json::as_f64)
                    .ok_or_else(|| format!("range `{k}` must be a number"))
            };
            ranges.push(Range {
                column,
                lo: num("lo")?,
                hi: num("hi")?,
            });
        }
    }
    let selection_rationale = match map.get("selectionRationale") {
        Some(Json::String(s)) => s.trim().to_string(),
        _ => String::new(),
    };
    Ok(DataSelection {
        dataset_id,
        columns,
        ranges,
        selection_rationale,
    })
}

/// Drops unknown or duplicate columns (keeping at most six), keeps ranges
/// only for selected numeric columns and clamps them into the column's
/// observed `[min, max]`. Empty ranges are dropped.
pub fn validate(raw: &DataSelection, datasets: &[DatasetSummary]) -> Result<DataSelection, SelectionError> {
    let summary = datasets
        .iter()
        .find(|d| d.id == raw.dataset_id)
        .ok_or_else(|| SelectionError::UnknownDataset(raw.dataset_id.clone()))?;
    let mut columns: Vec<String> = Vec::new();
    for c in &raw.columns {
        if summary.schema.column(c).is_some() && !columns.contains(c) && columns.len() < MAX_COLUMNS {
            columns.push(c.clone());
        }
    }
    if columns.is_empty() {
        return Err(SelectionError::NoValidColumns(raw.dataset_id.clone()));
    }
    let mut ranges: Vec<Range> = Vec::new();
    for r in &raw.ranges {
        if !columns.contains(&r.column) || ranges.iter().any(|x| x.column == r.column) {
            continue;
        }
        let is_numeric = summary.schema.column(&r.column).is_some_and(|c| c.role.is_numeric());
        let stats = summary.stats.get(&r.column);
        let bounds = stats.and_then(|s| Some((s.min?, s.max?)));
        let (Some((min, max)), true) = (bounds, is_numeric) else {
            continue;
        };
        // Inverted or NaN bounds.
        if r.lo.partial_cmp(&r.hi).is_none_or(|o| o.is_gt()) {
            continue;
        }
        let (lo, hi) = (r.lo.max(min), r.hi.min(max));
        if lo <= hi {
            ranges.push(Range {
                column: r.column.clone(),
                lo,
                hi,
            });
        }
    }
    Ok(DataSelection {
        dataset_id: raw.dataset_id.clone(),
        columns,
        ranges,
        selection_rationale: raw.selection_rationale.clone(),
    })
}
