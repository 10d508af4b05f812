//! Naive list-of-records transform evaluator.
//!
//! Written independently of the catalog's row-major interpreter: records are
//! name-keyed maps, grouping is a linear scan and sorting is an insertion
//! sort. Only the vocabulary contract (semantics and derived column names)
//! is shared.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, NaiveDate};
use cuechart_core::catalog::{
    AggregateFn, DeltaMode, Predicate, Role, SortDirection, Table, TemporalUnit, TimeUnitKind,
    Transform, Value,
};

pub type Record = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct RefColumn {
    pub name: String,
    pub role: Role,
    pub unit: Option<TemporalUnit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefTable {
    pub columns: Vec<RefColumn>,
    pub records: Vec<Record>,
}

impl RefTable {
    pub fn from_table(table: &Table) -> Self {
        let columns = table
            .schema
            .columns
            .iter()
            .map(|c| RefColumn {
                name: c.name.clone(),
                role: c.role,
                unit: c.temporal_unit,
            })
            .collect::<Vec<_>>();
        let records = table
            .rows
            .iter()
            .map(|row| {
                columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.name.clone(), v.clone()))
                    .collect()
            })
            .collect();
        Self { columns, records }
    }

    pub fn column(&self, name: &str) -> Option<&RefColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Cell-by-cell comparison against an interpreter result. Returns a
    /// description of the first mismatch.
    pub fn diff(&self, table: &Table) -> Option<String> {
        let names: Vec<&str> = table.schema.names().collect();
        let mine: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        if names != mine {
            return Some(format!("columns differ: {names:?} vs reference {mine:?}"));
        }
        if table.rows.len() != self.records.len() {
            return Some(format!(
                "row count {} vs reference {}",
                table.rows.len(),
                self.records.len()
            ));
        }
        for (r, (row, rec)) in table.rows.iter().zip(&self.records).enumerate() {
            for (cell, name) in row.iter().zip(&names) {
                let expected = &rec[*name];
                let same = match (cell, expected) {
                    (Value::Number(a), Value::Number(b)) => a.to_bits() == b.to_bits() || a == b,
                    (a, b) => a == b,
                };
                if !same {
                    return Some(format!(
                        "row {r} column {name}: {cell:?} vs reference {expected:?}"
                    ));
                }
            }
        }
        None
    }
}

pub fn reference_apply(input: &RefTable, transforms: &[Transform]) -> RefTable {
    transforms
        .iter()
        .fold(input.clone(), |table, t| reference_step(&table, t))
}

pub fn reference_step(table: &RefTable, transform: &Transform) -> RefTable {
    match transform {
        Transform::Filter { column, predicate } => {
            let mut out = table.clone();
            out.records.retain(|rec| {
                let v = &rec[column];
                match (v, predicate) {
                    (Value::Null, _) => false,
                    (Value::Number(x), Predicate::Range([lo, hi])) => *x >= *lo && *x <= *hi,
                    (_, Predicate::Range(_)) => false,
                    (v, Predicate::OneOf(set)) => set.contains(v),
                }
            });
            out
        }
        Transform::Aggregate { group_by, measures } => {
            let mut groups: Vec<(Vec<Value>, Vec<Record>)> = Vec::new();
            for rec in &table.records {
                let key: Vec<Value> = group_by.iter().map(|g| rec[g].clone()).collect();
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, members)) => members.push(rec.clone()),
                    None => groups.push((key, vec![rec.clone()])),
                }
            }
            let mut columns: Vec<RefColumn> = group_by
                .iter()
                .map(|g| table.column(g).expect("group column").clone())
                .collect();
            for m in measures {
                columns.push(RefColumn {
                    name: format!("{}_{}", m.func.as_str(), m.column),
                    role: Role::Quantitative,
                    unit: None,
                });
            }
            let records = groups
                .into_iter()
                .map(|(key, members)| {
                    let mut rec: Record = group_by.iter().cloned().zip(key).collect();
                    for m in measures {
                        let nums: Vec<f64> =
                            members.iter().filter_map(|r| r[&m.column].as_f64()).collect();
                        let v = if m.func == AggregateFn::Count {
                            Value::Number(members.len() as f64)
                        } else if nums.is_empty() {
                            Value::Null
                        } else {
                            let mut sum = 0.0;
                            for n in &nums {
                                sum += n;
                            }
                            Value::Number(match m.func {
                                AggregateFn::Sum => sum,
                                AggregateFn::Mean => sum / nums.len() as f64,
                                AggregateFn::Min => nums.iter().copied().fold(f64::INFINITY, f64::min),
                                AggregateFn::Max => {
                                    nums.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                                }
                                AggregateFn::Count => unreachable!(),
                            })
                        };
                        rec.insert(format!("{}_{}", m.func.as_str(), m.column), v);
                    }
                    rec
                })
                .collect();
            RefTable { columns, records }
        }
        Transform::TimeUnit { column, unit } => {
            let source = table.column(column).expect("time column").clone();
            let name = format!("{}_{}", unit.as_str(), column);
            derive(table, &name, Role::Temporal, source.unit, |rec| {
                match (&rec[column], source.unit) {
                    (Value::Number(v), Some(TemporalUnit::EpochMillis)) => {
                        let dt = DateTime::from_timestamp_millis(*v as i64).expect("valid ms");
                        let month = match unit {
                            TimeUnitKind::Year => 1,
                            TimeUnitKind::Quarter => match dt.month() {
                                1..=3 => 1,
                                4..=6 => 4,
                                7..=9 => 7,
                                _ => 10,
                            },
                            TimeUnitKind::Month => dt.month(),
                        };
                        let start = NaiveDate::from_ymd_opt(dt.year(), month, 1)
                            .unwrap()
                            .and_hms_opt(0, 0, 0)
                            .unwrap();
                        Value::Number(start.and_utc().timestamp_millis() as f64)
                    }
                    (Value::Number(v), _) => Value::Number(*v),
                    _ => Value::Null,
                }
            })
        }
        Transform::Bin { column, max_bins } => {
            let nums: Vec<f64> = table
                .records
                .iter()
                .filter_map(|r| r[column].as_f64())
                .collect();
            let lo = nums.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = nums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let name = format!("bin_{column}");
            derive(table, &name, Role::Quantitative, None, |rec| match rec[column].as_f64() {
                None => Value::Null,
                Some(_) if hi <= lo => Value::Number(lo),
                Some(v) => {
                    let width = (hi - lo) / *max_bins as f64;
                    let mut idx = ((v - lo) / width).floor() as i64;
                    if idx >= *max_bins as i64 {
                        idx = *max_bins as i64 - 1;
                    }
                    if idx < 0 {
                        idx = 0;
                    }
                    Value::Number(lo + idx as f64 * width)
                }
            })
        }
        Transform::Sort { column, direction } => {
            let before = |a: &Record, b: &Record| -> bool {
                // strict "a goes before b"
                match (&a[column], &b[column]) {
                    (Value::Null, _) => false,
                    (_, Value::Null) => true,
                    (x, y) => {
                        let ord = compare(x, y);
                        match direction {
                            SortDirection::Ascending => ord == std::cmp::Ordering::Less,
                            SortDirection::Descending => ord == std::cmp::Ordering::Greater,
                        }
                    }
                }
            };
            let mut sorted: Vec<Record> = Vec::with_capacity(table.records.len());
            for rec in &table.records {
                let mut pos = sorted.len();
                while pos > 0 && before(rec, &sorted[pos - 1]) {
                    pos -= 1;
                }
                sorted.insert(pos, rec.clone());
            }
            RefTable {
                columns: table.columns.clone(),
                records: sorted,
            }
        }
        Transform::TopK { k } => RefTable {
            columns: table.columns.clone(),
            records: table.records.iter().take(*k).cloned().collect(),
        },
        Transform::WindowDelta { column, mode, .. } => {
            let name = match mode {
                DeltaMode::Difference => format!("delta_{column}"),
                DeltaMode::PercentChange => format!("pct_change_{column}"),
            };
            let mut columns = table.columns.clone();
            columns.push(RefColumn {
                name: name.clone(),
                role: Role::Quantitative,
                unit: None,
            });
            let mut records = Vec::new();
            for (i, rec) in table.records.iter().enumerate() {
                let mut out = rec.clone();
                let v = if i == 0 {
                    Value::Null
                } else {
                    match (table.records[i - 1][column].as_f64(), rec[column].as_f64()) {
                        (Some(p), Some(c)) => match mode {
                            DeltaMode::Difference => Value::Number(c - p),
                            DeltaMode::PercentChange => {
                                if p == 0.0 {
                                    Value::Null
                                } else {
                                    Value::Number((c - p) / p * 100.0)
                                }
                            }
                        },
                        _ => Value::Null,
                    }
                };
                out.insert(name.clone(), v);
                records.push(out);
            }
            RefTable { columns, records }
        }
    }
}

fn compare(a: &Value, b: &Value) -> std::cmp::Ordering {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.partial_cmp(y).unwrap(),
        (Value::Text(x), Value::Text(y)) => x.cmp(y),
        _ => std::cmp::Ordering::Equal,
    }
}

fn derive(
    table: &RefTable,
    name: &str,
    role: Role,
    unit: Option<TemporalUnit>,
    f: impl Fn(&Record) -> Value,
) -> RefTable {
    let mut columns = table.columns.clone();
    columns.push(RefColumn {
        name: name.to_string(),
        role,
        unit,
    });
    let records = table
        .records
        .iter()
        .map(|rec| {
            let mut out = rec.clone();
            out.insert(name.to_string(), f(rec));
            out
        })
        .collect();
    RefTable { columns, records }
}
