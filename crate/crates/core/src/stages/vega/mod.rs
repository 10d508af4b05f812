//! Stage 4: Vega-Lite specs for drafts, and the subset validator used
//! everywhere a spec is accepted.

mod compile;
pub mod exemplars;
pub mod images;
mod llm;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

pub use compile::{compile_template, mark_for, CompileError, VEGA_LITE_SCHEMA};
pub use exemplars::{exemplars, Exemplar};
pub use llm::{build_prompt, parse_spec, SHAPE};

use crate::catalog::{output_schema, TableSchema, Transform, TransformError, MAX_BINS};
use images::{from_vega, parse_time_unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCode {
    UnsupportedMark,
    UnknownChannel,
    FieldUnresolved,
    UnsupportedTransform,
    MalformedDocument,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnsupportedMark => "UnsupportedMark",
            ErrorCode::UnknownChannel => "UnknownChannel",
            ErrorCode::FieldUnresolved => "FieldUnresolved",
            ErrorCode::UnsupportedTransform => "UnsupportedTransform",
            ErrorCode::MalformedDocument => "MalformedDocument",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecError {
    pub code: ErrorCode,
    /// JSON pointer into the document.
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub errors: Vec<SpecError>,
}

impl ValidationReport {
    pub fn codes(&self) -> Vec<ErrorCode> {
        let mut codes: Vec<ErrorCode> = self.errors.iter().map(|e| e.code).collect();
        codes.sort();
        codes.dedup();
        codes
    }
}

pub const MARKS: [&str; 4] = ["line", "bar", "arc", "point"];
pub const CHANNELS: [&str; 5] = ["x", "y", "color", "theta", "tooltip"];
const TOP_LEVEL: [&str; 9] = [
    "$schema",
    "title",
    "description",
    "data",
    "mark",
    "encoding",
    "transform",
    "width",
    "height",
];
const MULTI_VIEW: [&str; 8] = ["layer", "hconcat", "vconcat", "concat", "facet", "repeat", "spec", "resolve"];
const MARK_KEYS: [&str; 6] = ["type", "point", "tooltip", "interpolate", "innerRadius", "outerRadius"];
const DEF_KEYS: [&str; 9] = [
    "field",
    "type",
    "aggregate",
    "timeUnit",
    "bin",
    "title",
    "sort",
    "stack",
    "format",
];
const TYPES: [&str; 4] = ["quantitative", "nominal", "ordinal", "temporal"];
const AGGREGATES: [&str; 5] = ["sum", "mean", "count", "min", "max"];

struct Checker {
    errors: Vec<SpecError>,
}

impl Checker {
    fn push(&mut self, code: ErrorCode, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(SpecError {
            code,
            path: path.into(),
            message: message.into(),
        });
    }
}

/// Columns a transform reads; a missing one is `FieldUnresolved`.
pub fn referenced_columns(t: &Transform) -> Vec<&str> {
    match t {
        Transform::Filter { column, .. }
        | Transform::TimeUnit { column, .. }
        | Transform::Bin { column, .. }
        | Transform::Sort { column, .. }
        | Transform::WindowDelta { column, .. } => vec![column.as_str()],
        Transform::Aggregate { group_by, measures } => group_by
            .iter()
            .map(String::as_str)
            .chain(measures.iter().map(|m| m.column.as_str()))
            .collect(),
        Transform::TopK { .. } => Vec::new(),
    }
}

/// Mark name of a spec, if it has a well-formed one.
pub fn mark_name(spec: &Json) -> Option<&str> {
    match spec.get("mark")? {
        Json::String(s) => Some(s),
        Json::Object(m) => m.get("type")?.as_str(),
        _ => None,
    }
}

/// Catalog transforms encoded in a document's transform array.
pub fn spec_transforms(spec: &Json) -> Option<Vec<Transform>> {
    match spec.get("transform") {
        None => Some(Vec::new()),
        Some(Json::Array(entries)) => from_vega(entries).ok().map(|p| p.into_iter().map(|(_, t)| t).collect()),
        Some(_) => None,
    }
}

/// Structural subset check plus field resolution against the schema left
/// by the document's transforms, starting from `schema`.
pub fn validate_spec(spec: &Json, schema: &TableSchema) -> ValidationReport {
    let mut c = Checker { errors: Vec::new() };
    check(spec, schema, &mut c);
    ValidationReport {
        valid: c.errors.is_empty(),
        errors: c.errors,
    }
}

fn check(spec: &Json, schema: &TableSchema, c: &mut Checker) {
    let Some(doc) = spec.as_object() else {
        c.push(ErrorCode::MalformedDocument, "", "spec must be a JSON object");
        return;
    };
    for key in doc.keys() {
        if MULTI_VIEW.contains(&key.as_str()) {
            c.push(ErrorCode::MalformedDocument, format!("/{key}"), "only single-view specs are supported");
        } else if !TOP_LEVEL.contains(&key.as_str()) {
            c.push(ErrorCode::MalformedDocument, format!("/{key}"), format!("unsupported property `{key}`"));
        }
    }
    match doc.get("data") {
        Some(Json::Object(d)) if d.len() == 1 && d.get("name").is_some_and(Json::is_string) => {}
        Some(_) => c.push(ErrorCode::MalformedDocument, "/data", "data must be {\"name\": string}"),
        None => c.push(ErrorCode::MalformedDocument, "/data", "missing data reference"),
    }
    let mark = check_mark(doc, c);
    let post = check_transforms(doc, schema, c);
    check_encoding(doc, post.as_ref(), mark, c);
}

fn check_mark<'a>(doc: &'a Map<String, Json>, c: &mut Checker) -> Option<&'a str> {
    let name = match doc.get("mark") {
        None => {
            c.push(ErrorCode::MalformedDocument, "/mark", "missing mark");
            return None;
        }
        Some(Json::String(s)) => s.as_str(),
        Some(Json::Object(m)) => {
            if let Some(k) = m.keys().find(|k| !MARK_KEYS.contains(&k.as_str())) {
                c.push(ErrorCode::MalformedDocument, format!("/mark/{k}"), format!("unsupported mark property `{k}`"));
            }
            match m.get("type") {
                Some(Json::String(s)) => s.as_str(),
                _ => {
                    c.push(ErrorCode::MalformedDocument, "/mark/type", "mark type must be a string");
                    return None;
                }
            }
        }
        Some(_) => {
            c.push(ErrorCode::MalformedDocument, "/mark", "mark must be a string or object");
            return None;
        }
    };
    if MARKS.contains(&name) {
        Some(name)
    } else {
        c.push(ErrorCode::UnsupportedMark, "/mark", format!("mark `{name}` is outside the supported subset"));
        None
    }
}

/// Schema after the transforms, or `None` when the chain is broken.
fn check_transforms(doc: &Map<String, Json>, schema: &TableSchema, c: &mut Checker) -> Option<TableSchema> {
    let entries = match doc.get("transform") {
        None => return Some(schema.clone()),
        Some(Json::Array(entries)) => entries,
        Some(_) => {
            c.push(ErrorCode::MalformedDocument, "/transform", "transform must be an array");
            return None;
        }
    };
    let parsed = match from_vega(entries) {
        Ok(p) => p,
        Err(e) => {
            c.push(ErrorCode::UnsupportedTransform, format!("/transform/{}", e.entry), e.message);
            return None;
        }
    };
    let mut current = schema.clone();
    for (position, (entry, t)) in parsed.iter().enumerate() {
        let path = format!("/transform/{entry}");
        if let Some(missing) = referenced_columns(t).into_iter().find(|col| current.column(col).is_none()) {
            c.push(ErrorCode::FieldUnresolved, path, format!("field `{missing}` is not available here"));
            return None;
        }
        match output_schema(&current, t, position) {
            Ok(next) => current = next,
            Err(TransformError::SchemaMismatch { message, .. } | TransformError::Unsupported { message, .. }) => {
                c.push(ErrorCode::UnsupportedTransform, path, message);
                return None;
            }
        }
    }
    Some(current)
}

fn check_encoding(doc: &Map<String, Json>, schema: Option<&TableSchema>, mark: Option<&str>, c: &mut Checker) {
    let encoding = match doc.get("encoding") {
        Some(Json::Object(e)) => e,
        Some(_) => {
            c.push(ErrorCode::MalformedDocument, "/encoding", "encoding must be an object");
            return;
        }
        None => {
            c.push(ErrorCode::MalformedDocument, "/encoding", "missing encoding");
            return;
        }
    };
    for (channel, def) in encoding {
        let path = format!("/encoding/{channel}");
        if !CHANNELS.contains(&channel.as_str()) {
            c.push(ErrorCode::UnknownChannel, path, format!("channel `{channel}` is outside the supported subset"));
            continue;
        }
        match (channel.as_str(), def) {
            ("tooltip", Json::Array(defs)) => {
                for (i, d) in defs.iter().enumerate() {
                    check_def(&format!("{path}/{i}"), d, schema, c);
                }
            }
            _ => check_def(&path, def, schema, c),
        }
    }
    let has = |ch: &str| encoding.contains_key(ch);
    match mark {
        Some("arc") => {
            if !has("theta") {
                c.push(ErrorCode::MalformedDocument, "/encoding", "arc mark needs a theta channel");
            }
            if has("x") || has("y") {
                c.push(ErrorCode::MalformedDocument, "/encoding", "arc mark cannot use x or y");
            }
        }
        Some(m) => {
            if !has("x") || !has("y") {
                c.push(ErrorCode::MalformedDocument, "/encoding", format!("{m} mark needs x and y channels"));
            }
            if has("theta") {
                c.push(ErrorCode::MalformedDocument, "/encoding/theta", format!("{m} mark cannot use theta"));
            }
        }
        None => {}
    }
}

fn check_def(path: &str, def: &Json, schema: Option<&TableSchema>, c: &mut Checker) {
    let Some(def) = def.as_object() else {
        c.push(ErrorCode::MalformedDocument, path, "channel definition must be an object");
        return;
    };
    if let Some(k) = def.keys().find(|k| !DEF_KEYS.contains(&k.as_str())) {
        c.push(ErrorCode::MalformedDocument, format!("{path}/{k}"), format!("unsupported channel property `{k}`"));
    }
    match def.get("type").and_then(Json::as_str) {
        Some(t) if TYPES.contains(&t) => {}
        Some(t) => c.push(ErrorCode::MalformedDocument, format!("{path}/type"), format!("unknown type `{t}`")),
        None => c.push(ErrorCode::MalformedDocument, format!("{path}/type"), "channel needs a type"),
    }
    let aggregate = def.get("aggregate");
    match aggregate {
        None => {}
        Some(Json::String(a)) if AGGREGATES.contains(&a.as_str()) => {}
        Some(a) => c.push(
            ErrorCode::UnsupportedTransform,
            format!("{path}/aggregate"),
            format!("aggregate {a} is outside the supported subset"),
        ),
    }
    match def.get("timeUnit") {
        None => {}
        Some(Json::String(u)) if parse_time_unit(u).is_some() => {}
        Some(u) => c.push(
            ErrorCode::UnsupportedTransform,
            format!("{path}/timeUnit"),
            format!("timeUnit {u} is outside the supported subset"),
        ),
    }
    match def.get("bin") {
        None | Some(Json::Bool(_)) => {}
        Some(Json::Object(b))
            if b.len() == 1 && b.get("maxbins").and_then(Json::as_u64).is_some_and(|m| (1..=MAX_BINS as u64).contains(&m)) => {}
        Some(_) => c.push(
            ErrorCode::UnsupportedTransform,
            format!("{path}/bin"),
            format!("bin supports only maxbins in 1..={MAX_BINS}"),
        ),
    }
    match def.get("field") {
        Some(Json::String(field)) => {
            if let Some(schema) = schema {
                if schema.column(field).is_none() {
                    c.push(ErrorCode::FieldUnresolved, format!("{path}/field"), format!("field `{field}` does not exist"));
                }
            }
        }
        Some(_) => c.push(ErrorCode::MalformedDocument, format!("{path}/field"), "field must be a string"),
        None if aggregate.and_then(Json::as_str) == Some("count") => {}
        None => c.push(ErrorCode::MalformedDocument, format!("{path}/field"), "channel needs a field"),
    }
}
