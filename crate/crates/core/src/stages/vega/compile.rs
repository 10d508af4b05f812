//! Deterministic draft-to-spec compiler, the fallback when the model's spec
//! is unusable.

use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use super::images::to_vega;
use crate::catalog::{chain_schema, Role, TableSchema};
use crate::stages::generation::{CandidateDraft, ChartType};

pub const VEGA_LITE_SCHEMA: &str = "https://vega.github.io/schema/vega-lite/v5.json";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("UnsupportedChartType: `{0}` has no Vega-Lite mark")]
    UnsupportedChartType(String),
    #[error("draft does not fit the selection: {0}")]
    InvalidDraft(String),
}

pub fn mark_for(chart: ChartType) -> Option<&'static str> {
    match chart {
        ChartType::Line => Some("line"),
        ChartType::Bar => Some("bar"),
        ChartType::Pie => Some("arc"),
        ChartType::Scatter => Some("point"),
        ChartType::Table => None,
    }
}

fn vega_type(role: Role) -> &'static str {
    role.as_str()
}

/// Compiles `draft` against the selection schema. Total on valid chart drafts.
pub fn compile_template(draft: &CandidateDraft, dataset_id: &str, schema: &TableSchema) -> Result<Json, CompileError> {
    let mark = mark_for(draft.chart_type)
        .ok_or_else(|| CompileError::UnsupportedChartType(draft.chart_type.as_str().to_string()))?;
    let output = chain_schema(schema, &draft.transforms).map_err(|e| CompileError::InvalidDraft(e.to_string()))?;

    let mut encoding = Map::new();
    let mut tooltip = Vec::new();
    for (channel, r) in &draft.encoding {
        let desc = output
            .column(&r.column)
            .ok_or_else(|| CompileError::InvalidDraft(format!("column `{}` is not available", r.column)))?;
        let mut def = Map::new();
        def.insert("field".into(), json!(r.column));
        match r.aggregate_fn {
            Some(f) => {
                def.insert("type".into(), json!("quantitative"));
                def.insert("aggregate".into(), json!(f.as_str()));
            }
            None => {
                def.insert("type".into(), json!(vega_type(desc.role)));
            }
        }
        let def = Json::Object(def);
        if !tooltip.contains(&def) {
            tooltip.push(def.clone());
        }
        encoding.insert(channel.as_str().to_string(), def);
    }
    encoding.insert("tooltip".into(), Json::Array(tooltip));

    let mut spec = json!({
        "$schema": VEGA_LITE_SCHEMA,
        "title": draft.title,
        "data": {"name": dataset_id},
        "mark": mark,
        "encoding": encoding,
    });
    if !draft.transforms.is_empty() {
        spec["transform"] = Json::Array(to_vega(&draft.transforms));
    }
    Ok(spec)
}
