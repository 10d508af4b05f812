//! The constrained transform vocabulary and its row interpreter.
//!
//! Every stage downstream of data selection may only express data
//! manipulation through [`Transform`]. Composition is left to right; the
//! schema produced by each step is what the next step is checked against.

use std::collections::HashMap;

use chrono::{DateTime, Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::schema::{ColumnDescriptor, Role, TableSchema, TemporalUnit};
use super::table::Table;
use super::value::{Value, ValueKey};

pub const MAX_BINS: u32 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Predicate {
    /// Inclusive numeric range `[lo, hi]`.
    #[serde(serialize_with = "serialize_range")]
    Range([f64; 2]),
    /// Set membership.
    OneOf(Vec<Value>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateFn {
    Sum,
    Mean,
    Count,
    Min,
    Max,
}

impl AggregateFn {
    pub const ALL: [AggregateFn; 5] = [
        AggregateFn::Sum,
        AggregateFn::Mean,
        AggregateFn::Count,
        AggregateFn::Min,
        AggregateFn::Max,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregateFn::Sum => "sum",
            AggregateFn::Mean => "mean",
            AggregateFn::Count => "count",
            AggregateFn::Min => "min",
            AggregateFn::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Measure {
    pub column: String,
    #[serde(rename = "fn")]
    pub func: AggregateFn,
}

impl Measure {
    pub fn output_name(&self) -> String {
        format!("{}_{}", self.func.as_str(), self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnitKind {
    Year,
    Quarter,
    Month,
}

impl TimeUnitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeUnitKind::Year => "year",
            TimeUnitKind::Quarter => "quarter",
            TimeUnitKind::Month => "month",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortDirection {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DeltaMode {
    Difference,
    PercentChange,
}

fn serialize_range<S: serde::Serializer>(range: &[f64; 2], s: S) -> Result<S::Ok, S::Error> {
    [Value::Number(range[0]), Value::Number(range[1])].serialize(s)
}

fn default_lag() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Transform {
    Filter {
        column: String,
        predicate: Predicate,
    },
    Aggregate {
        #[serde(rename = "groupBy", default)]
        group_by: Vec<String>,
        measures: Vec<Measure>,
    },
    TimeUnit {
        column: String,
        unit: TimeUnitKind,
    },
    Bin {
        column: String,
        #[serde(rename = "maxBins")]
        max_bins: u32,
    },
    Sort {
        column: String,
        direction: SortDirection,
    },
    TopK {
        k: usize,
    },
    WindowDelta {
        column: String,
        mode: DeltaMode,
        #[serde(default = "default_lag")]
        lag: u32,
    },
}

impl Transform {
    pub fn kind(&self) -> &'static str {
        match self {
            Transform::Filter { .. } => "filter",
            Transform::Aggregate { .. } => "aggregate",
            Transform::TimeUnit { .. } => "timeUnit",
            Transform::Bin { .. } => "bin",
            Transform::Sort { .. } => "sort",
            Transform::TopK { .. } => "topK",
            Transform::WindowDelta { .. } => "windowDelta",
        }
    }

    /// Name of the column this transform adds, if any (aggregate excluded).
    pub fn derived_column(&self) -> Option<String> {
        match self {
            Transform::TimeUnit { column, unit } => Some(format!("{}_{column}", unit.as_str())),
            Transform::Bin { column, .. } => Some(format!("bin_{column}")),
            Transform::WindowDelta { column, mode, .. } => Some(match mode {
                DeltaMode::Difference => format!("delta_{column}"),
                DeltaMode::PercentChange => format!("pct_change_{column}"),
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("TransformSchemaMismatch at transform #{index}: {message}")]
    SchemaMismatch { index: usize, message: String },
    #[error("UnsupportedTransform at transform #{index}: {message}")]
    Unsupported { index: usize, message: String },
}

impl TransformError {
    pub fn code(&self) -> &'static str {
        match self {
            TransformError::SchemaMismatch { .. } => "TransformSchemaMismatch",
            TransformError::Unsupported { .. } => "UnsupportedTransform",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            TransformError::SchemaMismatch { index, .. } | TransformError::Unsupported { index, .. } => {
                *index
            }
        }
    }
}

/// Parses a JSON array of transforms; anything outside the vocabulary is
/// reported as unsupported with its position.
pub fn parse_transforms(value: &serde_json::Value) -> Result<Vec<Transform>, TransformError> {
    let items = value.as_array().ok_or_else(|| TransformError::Unsupported {
        index: 0,
        message: "transforms must be a JSON array".into(),
    })?;
    items
        .iter()
        .enumerate()
        .map(|(index, item)| {
            serde_json::from_value(item.clone()).map_err(|e| TransformError::Unsupported {
                index,
                message: e.to_string(),
            })
        })
        .collect()
}

fn mismatch(index: usize, message: impl Into<String>) -> TransformError {
    TransformError::SchemaMismatch {
        index,
        message: message.into(),
    }
}

fn require<'a>(
    schema: &'a TableSchema,
    column: &str,
    index: usize,
) -> Result<&'a ColumnDescriptor, TransformError> {
    schema
        .column(column)
        .ok_or_else(|| mismatch(index, format!("unknown column `{column}`")))
}

fn add_column(
    schema: &TableSchema,
    column: ColumnDescriptor,
    index: usize,
) -> Result<TableSchema, TransformError> {
    if schema.column(&column.name).is_some() {
        return Err(mismatch(
            index,
            format!("derived column `{}` already exists", column.name),
        ));
    }
    let mut out = schema.clone();
    out.columns.push(column);
    Ok(out)
}

/// Schema produced by applying `transform` (at position `index`) to `schema`.
pub fn output_schema(
    schema: &TableSchema,
    transform: &Transform,
    index: usize,
) -> Result<TableSchema, TransformError> {
    match transform {
        Transform::Filter { column, predicate } => {
            let desc = require(schema, column, index)?;
            if matches!(predicate, Predicate::Range(_)) && !desc.role.is_numeric() {
                return Err(mismatch(
                    index,
                    format!("range filter on {} column `{column}`", desc.role.as_str()),
                ));
            }
            Ok(schema.clone())
        }
        Transform::Aggregate { group_by, measures } => {
            if measures.is_empty() {
                return Err(mismatch(index, "aggregate needs at least one measure"));
            }
            let mut columns = Vec::with_capacity(group_by.len() + measures.len());
            for g in group_by {
                let desc = require(schema, g, index)?;
                if columns.iter().any(|c: &ColumnDescriptor| &c.name == g) {
                    return Err(mismatch(index, format!("duplicate group column `{g}`")));
                }
                columns.push(desc.clone());
            }
            for m in measures {
                let desc = require(schema, &m.column, index)?;
                if m.func != AggregateFn::Count && desc.role != Role::Quantitative {
                    return Err(mismatch(
                        index,
                        format!("{} over non-quantitative column `{}`", m.func.as_str(), m.column),
                    ));
                }
                let name = m.output_name();
                if columns.iter().any(|c| c.name == name) {
                    return Err(mismatch(index, format!("duplicate output column `{name}`")));
                }
                let nullable = m.func != AggregateFn::Count && desc.nullable;
                columns.push(ColumnDescriptor::new(name, Role::Quantitative).nullable(nullable));
            }
            Ok(TableSchema::new(columns))
        }
        Transform::TimeUnit { column, .. } => {
            let desc = require(schema, column, index)?;
            if desc.role != Role::Temporal {
                return Err(mismatch(index, format!("timeUnit on non-temporal column `{column}`")));
            }
            let derived = ColumnDescriptor {
                name: transform.derived_column().expect("timeUnit derives a column"),
                role: Role::Temporal,
                nullable: desc.nullable,
                temporal_unit: desc.temporal_unit,
            };
            add_column(schema, derived, index)
        }
        Transform::Bin { column, max_bins } => {
            if *max_bins == 0 || *max_bins > MAX_BINS {
                return Err(TransformError::Unsupported {
                    index,
                    message: format!("maxBins must be in 1..={MAX_BINS}, got {max_bins}"),
                });
            }
            let desc = require(schema, column, index)?;
            if desc.role != Role::Quantitative {
                return Err(mismatch(index, format!("bin on non-quantitative column `{column}`")));
            }
            let derived = ColumnDescriptor::new(transform.derived_column().expect("bin"), Role::Quantitative)
                .nullable(desc.nullable);
            add_column(schema, derived, index)
        }
        Transform::Sort { column, .. } => {
            require(schema, column, index)?;
            Ok(schema.clone())
        }
        Transform::TopK { k } => {
            if *k == 0 {
                return Err(TransformError::Unsupported {
                    index,
                    message: "topK requires k >= 1".into(),
                });
            }
            Ok(schema.clone())
        }
        Transform::WindowDelta { column, lag, .. } => {
            if *lag != 1 {
                return Err(TransformError::Unsupported {
                    index,
                    message: format!("windowDelta supports lag 1 only, got {lag}"),
                });
            }
            let desc = require(schema, column, index)?;
            if desc.role != Role::Quantitative {
                return Err(mismatch(
                    index,
                    format!("windowDelta on non-quantitative column `{column}`"),
                ));
            }
            let derived = ColumnDescriptor::new(transform.derived_column().expect("delta"), Role::Quantitative)
                .nullable(true);
            add_column(schema, derived, index)
        }
    }
}

/// Schema after the whole chain, without touching any rows.
pub fn chain_schema(schema: &TableSchema, transforms: &[Transform]) -> Result<TableSchema, TransformError> {
    transforms
        .iter()
        .enumerate()
        .try_fold(schema.clone(), |s, (i, t)| output_schema(&s, t, i))
}

/// Applies `transforms` left to right. An empty chain returns the input unchanged.
pub fn apply_transforms(table: &Table, transforms: &[Transform]) -> Result<Table, TransformError> {
    let mut current = table.clone();
    for (index, transform) in transforms.iter().enumerate() {
        let schema = output_schema(&current.schema, transform, index)?;
        let rows = apply_rows(&current, transform);
        current = Table::new(schema, rows);
    }
    Ok(current)
}

fn col_index(table: &Table, name: &str) -> usize {
    table
        .schema
        .index_of(name)
        .expect("column checked by output_schema")
}

fn apply_rows(table: &Table, transform: &Transform) -> Vec<Vec<Value>> {
    match transform {
        Transform::Filter { column, predicate } => {
            let idx = col_index(table, column);
            table
                .rows
                .iter()
                .filter(|row| matches_predicate(&row[idx], predicate))
                .cloned()
                .collect()
        }
        Transform::Aggregate { group_by, measures } => aggregate(table, group_by, measures),
        Transform::TimeUnit { column, unit } => {
            let idx = col_index(table, column);
            let temporal_unit = table.schema.columns[idx].temporal_unit;
            extend_rows(table, |row| truncate_time(&row[idx], *unit, temporal_unit))
        }
        Transform::Bin { column, max_bins } => {
            let idx = col_index(table, column);
            let binner = Binner::fit(table.rows.iter().map(|r| &r[idx]), *max_bins);
            extend_rows(table, |row| binner.bin(&row[idx]))
        }
        Transform::Sort { column, direction } => {
            let idx = col_index(table, column);
            let mut rows = table.rows.clone();
            // stable; nulls last in either direction
            rows.sort_by(|a, b| match (a[idx].is_null(), b[idx].is_null()) {
                (true, true) => std::cmp::Ordering::Equal,
                (true, false) => std::cmp::Ordering::Greater,
                (false, true) => std::cmp::Ordering::Less,
                (false, false) => {
                    let ord = a[idx].total_cmp(&b[idx]);
                    match direction {
                        SortDirection::Ascending => ord,
                        SortDirection::Descending => ord.reverse(),
                    }
                }
            });
            rows
        }
        Transform::TopK { k } => table.rows.iter().take(*k).cloned().collect(),
        Transform::WindowDelta { column, mode, .. } => {
            let idx = col_index(table, column);
            let mut prev: Option<f64> = None;
            let mut out = Vec::with_capacity(table.rows.len());
            for row in &table.rows {
                let cur = row[idx].as_f64();
                let delta = match (prev, cur) {
                    (Some(p), Some(c)) => match mode {
                        DeltaMode::Difference => Value::Number(c - p),
                        DeltaMode::PercentChange if p != 0.0 => Value::Number((c - p) / p * 100.0),
                        DeltaMode::PercentChange => Value::Null,
                    },
                    _ => Value::Null,
                };
                prev = cur;
                let mut r = row.clone();
                r.push(delta);
                out.push(r);
            }
            out
        }
    }
}

fn extend_rows(table: &Table, f: impl Fn(&[Value]) -> Value) -> Vec<Vec<Value>> {
    table
        .rows
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.push(f(row));
            r
        })
        .collect()
}

fn matches_predicate(cell: &Value, predicate: &Predicate) -> bool {
    if cell.is_null() {
        return false;
    }
    match predicate {
        Predicate::Range([lo, hi]) => cell.as_f64().is_some_and(|v| *lo <= v && v <= *hi),
        Predicate::OneOf(set) => set.iter().any(|candidate| candidate == cell),
    }
}

#[derive(Default)]
struct Accumulator {
    rows: usize,
    non_null: usize,
    sum: f64,
    min: Option<f64>,
    max: Option<f64>,
}

fn aggregate(table: &Table, group_by: &[String], measures: &[Measure]) -> Vec<Vec<Value>> {
    let group_idx: Vec<usize> = group_by.iter().map(|g| col_index(table, g)).collect();
    let measure_idx: Vec<usize> = measures.iter().map(|m| col_index(table, &m.column)).collect();

    let mut order: Vec<Vec<Value>> = Vec::new();
    let mut groups: HashMap<Vec<ValueKey>, (usize, Vec<Accumulator>)> = HashMap::new();

    for row in &table.rows {
        let key: Vec<ValueKey> = group_idx.iter().map(|&i| row[i].key()).collect();
        let slot = groups.entry(key).or_insert_with(|| {
            order.push(group_idx.iter().map(|&i| row[i].clone()).collect());
            (
                order.len() - 1,
                measures.iter().map(|_| Accumulator::default()).collect(),
            )
        });
        for (acc, &mi) in slot.1.iter_mut().zip(&measure_idx) {
            acc.rows += 1;
            if let Some(v) = row[mi].as_f64() {
                acc.non_null += 1;
                acc.sum += v;
                acc.min = Some(acc.min.map_or(v, |m| m.min(v)));
                acc.max = Some(acc.max.map_or(v, |m| m.max(v)));
            }
        }
    }

    let mut finished: Vec<(usize, Vec<Accumulator>)> = groups.into_values().collect();
    finished.sort_by_key(|(pos, _)| *pos);
    finished
        .into_iter()
        .map(|(pos, accs)| {
            let mut row = order[pos].clone();
            for (acc, m) in accs.iter().zip(measures) {
                row.push(match m.func {
                    AggregateFn::Count => Value::Number(acc.rows as f64),
                    _ if acc.non_null == 0 => Value::Null,
                    AggregateFn::Sum => Value::Number(acc.sum),
                    AggregateFn::Mean => Value::Number(acc.sum / acc.non_null as f64),
                    AggregateFn::Min => Value::Number(acc.min.expect("non-null")),
                    AggregateFn::Max => Value::Number(acc.max.expect("non-null")),
                });
            }
            row
        })
        .collect()
}

fn truncate_time(cell: &Value, unit: TimeUnitKind, storage: Option<TemporalUnit>) -> Value {
    let Some(v) = cell.as_f64() else {
        return Value::Null;
    };
    match storage {
        // a bare year already is its own year/quarter/month start
        Some(TemporalUnit::Year) | None => Value::Number(v),
        Some(TemporalUnit::EpochMillis) => {
            let Some(dt) = DateTime::from_timestamp_millis(v as i64) else {
                return Value::Null;
            };
            let month = match unit {
                TimeUnitKind::Year => 1,
                TimeUnitKind::Quarter => (dt.month0() / 3) * 3 + 1,
                TimeUnitKind::Month => dt.month(),
            };
            NaiveDate::from_ymd_opt(dt.year(), month, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .map(|d| Value::Number(d.and_utc().timestamp_millis() as f64))
                .unwrap_or(Value::Null)
        }
    }
}

/// Equal-width bins over the observed `[min, max]`; a cell maps to its bin start.
struct Binner {
    min: f64,
    width: f64,
    bins: u32,
}

impl Binner {
    fn fit<'a>(values: impl Iterator<Item = &'a Value>, bins: u32) -> Self {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter_map(Value::as_f64) {
            min = min.min(v);
            max = max.max(v);
        }
        let width = if max > min { (max - min) / bins as f64 } else { 0.0 };
        Self { min, width, bins }
    }

    fn bin(&self, cell: &Value) -> Value {
        let Some(v) = cell.as_f64() else {
            return Value::Null;
        };
        if self.width == 0.0 {
            return Value::Number(self.min);
        }
        let idx = (((v - self.min) / self.width).floor() as i64).clamp(0, self.bins as i64 - 1);
        Value::Number(self.min + idx as f64 * self.width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbers(name: &str, values: &[Option<f64>]) -> Table {
        let schema = TableSchema::new(vec![
            ColumnDescriptor::new(name, Role::Quantitative).nullable(values.iter().any(Option::is_none))
        ]);
        let rows = values
            .iter()
            .map(|v| vec![v.map_or(Value::Null, Value::Number)])
            .collect();
        Table::new(schema, rows)
    }

    #[test]
    fn lag_one_difference() {
        let t = numbers("v", &[Some(10.0), Some(12.0), Some(15.0)]);
        let out = apply_transforms(
            &t,
            &[Transform::WindowDelta {
                column: "v".into(),
                mode: DeltaMode::Difference,
                lag: 1,
            }],
        )
        .unwrap();
        let deltas: Vec<Value> = out.rows.iter().map(|r| r[1].clone()).collect();
        assert_eq!(deltas, vec![Value::Null, Value::Number(2.0), Value::Number(3.0)]);
        assert_eq!(out.schema.columns[1].name, "delta_v");
    }

    #[test]
    fn delta_is_absent_after_null() {
        let t = numbers("v", &[Some(1.0), None, Some(3.0), Some(4.0)]);
        let out = apply_transforms(
            &t,
            &[Transform::WindowDelta {
                column: "v".into(),
                mode: DeltaMode::PercentChange,
                lag: 1,
            }],
        )
        .unwrap();
        let deltas: Vec<Value> = out.rows.iter().map(|r| r[1].clone()).collect();
        assert_eq!(
            deltas,
            vec![Value::Null, Value::Null, Value::Null, Value::Number((4.0 - 3.0) / 3.0 * 100.0)]
        );
    }

    #[test]
    fn empty_chain_is_identity() {
        let t = numbers("v", &[Some(1.0), None]);
        assert_eq!(apply_transforms(&t, &[]).unwrap(), t);
    }

    #[test]
    fn filter_drops_nulls() {
        let t = numbers("v", &[Some(1.0), None, Some(5.0)]);
        let out = apply_transforms(
            &t,
            &[Transform::Filter {
                column: "v".into(),
                predicate: Predicate::Range([0.0, 10.0]),
            }],
        )
        .unwrap();
        assert_eq!(out.row_count(), 2);
    }

    #[test]
    fn mismatch_reports_offending_index() {
        let t = numbers("v", &[Some(1.0)]);
        let err = apply_transforms(
            &t,
            &[
                Transform::TopK { k: 1 },
                Transform::Sort {
                    column: "missing".into(),
                    direction: SortDirection::Ascending,
                },
            ],
        )
        .unwrap_err();
        assert_eq!(err.code(), "TransformSchemaMismatch");
        assert_eq!(err.index(), 1);
    }

    #[test]
    fn aggregate_skips_nulls_but_counts_rows() {
        let schema = TableSchema::new(vec![
            ColumnDescriptor::new("g", Role::Nominal),
            ColumnDescriptor::new("v", Role::Quantitative).nullable(true),
        ]);
        let t = Table::new(
            schema,
            vec![
                vec!["a".into(), Value::Number(2.0)],
                vec!["b".into(), Value::Null],
                vec!["a".into(), Value::Null],
                vec!["a".into(), Value::Number(4.0)],
            ],
        );
        let out = apply_transforms(
            &t,
            &[Transform::Aggregate {
                group_by: vec!["g".into()],
                measures: vec![
                    Measure { column: "v".into(), func: AggregateFn::Mean },
                    Measure { column: "v".into(), func: AggregateFn::Count },
                ],
            }],
        )
        .unwrap();
        assert_eq!(
            out.rows,
            vec![
                vec!["a".into(), Value::Number(3.0), Value::Number(3.0)],
                vec!["b".into(), Value::Null, Value::Number(1.0)],
            ]
        );
        let names: Vec<&str> = out.schema.names().collect();
        assert_eq!(names, ["g", "mean_v", "count_v"]);
    }

    #[test]
    fn bin_limits_are_enforced() {
        let t = numbers("v", &[Some(1.0)]);
        let err = apply_transforms(&t, &[Transform::Bin { column: "v".into(), max_bins: 21 }]).unwrap_err();
        assert_eq!(err.code(), "UnsupportedTransform");
    }

    #[test]
    fn transforms_round_trip_through_json() {
        let json = serde_json::json!([
            {"type": "filter", "column": "year", "predicate": {"range": [2005, 2025]}},
            {"type": "aggregate", "groupBy": ["year"], "measures": [{"column": "t", "fn": "mean"}]},
            {"type": "windowDelta", "column": "t", "mode": "percentChange"},
            {"type": "topK", "k": 3}
        ]);
        let parsed = parse_transforms(&json).unwrap();
        assert_eq!(parsed.len(), 4);
        assert_eq!(serde_json::to_value(&parsed[0]).unwrap(), json[0]);
        let bad = serde_json::json!([{"type": "topK", "k": 1}, {"type": "pivot"}]);
        assert_eq!(parse_transforms(&bad).unwrap_err().index(), 1);
    }

    #[test]
    fn epoch_millis_truncate_to_quarter() {
        let jan = crate::catalog::schema::parse_iso_millis("2021-05-17").unwrap() as f64;
        let q2 = crate::catalog::schema::parse_iso_millis("2021-04-01").unwrap() as f64;
        assert_eq!(
            truncate_time(&Value::Number(jan), TimeUnitKind::Quarter, Some(TemporalUnit::EpochMillis)),
            Value::Number(q2)
        );
    }
}
