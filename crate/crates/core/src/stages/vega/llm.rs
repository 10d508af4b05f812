//! Few-shot spec generation through the gateway.

use std::fmt::Write as _;

use serde_json::Value as Json;

use super::{exemplars, mark_for, mark_name, validate_spec};
use crate::catalog::TableSchema;
use crate::gateway::{Stage, StagePrompt};
use crate::stages::describe_schema;
use crate::stages::generation::CandidateDraft;

pub const SHAPE: &str = "VegaLiteSpec";

fn system() -> String {
    let mut s = String::from(
        "You write Vega-Lite v5 chart documents for visualization drafts. Use a single view, \
mark line, bar, arc or point, channels x, y, color, theta and tooltip, and reference the data \
by name. Express the draft's transforms with these images: range filter as \
\"datum.c >= lo && datum.c <= hi\"; set filter as {\"field\", \"oneOf\"}; aggregate with \
\"as\" named {op}_{field}; timeUnit year, yearquarter or yearmonth with \"as\" {unit}_{field}; \
bin {\"maxbins\"} with \"as\" bin_{field}; sort as a row_number window named sort_rank with a \
sort key; topK as a row_number window named topk_rank followed by \"datum.topk_rank <= k\"; \
windowDelta as a lag window named lag_{field} followed by the null-safe calculate. \
Reply with the JSON spec only.\n\nExamples:\n",
    );
    for ex in exemplars() {
        let _ = writeln!(s, "Draft: {}", ex.draft);
        let _ = writeln!(s, "Spec: {}\n", ex.spec);
    }
    s
}

pub fn build_prompt(draft: &CandidateDraft, dataset_id: &str, schema: &TableSchema) -> StagePrompt {
    let draft_json = serde_json::to_string(draft).unwrap_or_default();
    let user = format!(
        "Dataset `{dataset_id}` columns:\n{}\nDraft: {draft_json}\n",
        describe_schema(schema, None)
    );
    StagePrompt::new(Stage::Specgen, SHAPE, system(), user).with_slot(draft.index)
}

/// Accepts a bare document or `{"spec": ...}`; it must validate, use
/// the draft's mark and name the selected dataset.
pub fn parse_spec(value: &Json, draft: &CandidateDraft, dataset_id: &str, schema: &TableSchema) -> Result<Json, String> {
    let spec = match value.get("spec") {
        Some(inner) if value.get("mark").is_none() => inner.clone(),
        _ => value.clone(),
    };
    let report = validate_spec(&spec, schema);
    if !report.valid {
        let problems: Vec<String> = report
            .errors
            .iter()
            .map(|e| format!("{} at {}: {}", e.code.as_str(), e.path, e.message))
            .collect();
        return Err(problems.join("; "));
    }
    let expected = mark_for(draft.chart_type).ok_or("table drafts have no spec")?;
    if mark_name(&spec) != Some(expected) {
        return Err(format!("mark must be `{expected}` for a {} draft", draft.chart_type.as_str()));
    }
    if spec["data"]["name"].as_str() != Some(dataset_id) {
        return Err(format!("data must be {{\"name\": \"{dataset_id}\"}}"));
    }
    Ok(spec)
}
