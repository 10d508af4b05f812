//! Seeded generators for random tables and valid transform chains.

use cuechart_core::catalog::{
    AggregateFn, ColumnDescriptor, DeltaMode, Measure, Predicate, Role, SortDirection, Table,
    TableSchema, TemporalUnit, TimeUnitKind, Transform, Value,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::reference::{reference_step, RefTable};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const WORDS: &[&str] = &["north", "south", "east", "west", "alpha", "beta"];

/// A table with at most `max_rows` rows and 1..=`max_cols` columns of mixed roles.
pub fn random_table(rng: &mut impl Rng, max_rows: usize, max_cols: usize) -> Table {
    let cols = rng.gen_range(1..=max_cols);
    let rows = rng.gen_range(0..=max_rows);
    let mut columns = Vec::new();
    for i in 0..cols {
        let desc = match rng.gen_range(0..4) {
            0 => ColumnDescriptor::new(format!("q{i}"), Role::Quantitative),
            1 => ColumnDescriptor::new(format!("n{i}"), Role::Nominal),
            2 => ColumnDescriptor::new(format!("year{i}"), Role::Temporal),
            _ => ColumnDescriptor {
                name: format!("date{i}"),
                role: Role::Temporal,
                nullable: false,
                temporal_unit: Some(TemporalUnit::EpochMillis),
            },
        };
        columns.push(desc.nullable(true));
    }
    let data = (0..rows)
        .map(|_| {
            columns
                .iter()
                .map(|c| {
                    if rng.gen_bool(0.1) {
                        return Value::Null;
                    }
                    match (c.role, c.temporal_unit) {
                        (Role::Quantitative, _) => {
                            // small integers and halves so groups and ties occur
                            Value::Number(rng.gen_range(-20..=20) as f64 / 2.0)
                        }
                        (Role::Temporal, Some(TemporalUnit::EpochMillis)) => {
                            let day = rng.gen_range(0..1500) as f64;
                            Value::Number(1_577_836_800_000.0 + day * 86_400_000.0)
                        }
                        (Role::Temporal, _) => Value::Number(rng.gen_range(1990..=2010) as f64),
                        _ => Value::Text(WORDS.choose(rng).unwrap().to_string()),
                    }
                })
                .collect()
        })
        .collect();
    Table::new(TableSchema::new(columns), data)
}

fn pick<'a>(rng: &mut impl Rng, table: &'a RefTable, roles: &[Role]) -> Option<&'a str> {
    let names: Vec<&str> = table
        .columns
        .iter()
        .filter(|c| roles.contains(&c.role))
        .map(|c| c.name.as_str())
        .collect();
    names.choose(rng).copied()
}

fn has(table: &RefTable, name: &str) -> bool {
    table.column(name).is_some()
}

/// One transform valid against `table`, or `None` when the draw does not fit.
pub fn random_transform(rng: &mut impl Rng, table: &RefTable) -> Option<Transform> {
    const NUMERIC: &[Role] = &[Role::Quantitative, Role::Temporal];
    const ANY: &[Role] = &[Role::Quantitative, Role::Temporal, Role::Nominal, Role::Ordinal];
    match rng.gen_range(0..8) {
        0 => {
            let column = pick(rng, table, NUMERIC)?.to_string();
            let values: Vec<f64> = table.records.iter().filter_map(|r| r[&column].as_f64()).collect();
            let a = *values.choose(rng)?;
            let b = *values.choose(rng)?;
            Some(Transform::Filter {
                column,
                predicate: Predicate::Range([a.min(b), a.max(b)]),
            })
        }
        1 => {
            let column = pick(rng, table, ANY)?.to_string();
            let mut set: Vec<Value> = table
                .records
                .iter()
                .map(|r| r[&column].clone())
                .filter(|v| !v.is_null())
                .collect();
            set.shuffle(rng);
            set.truncate(rng.gen_range(1..=3));
            Some(Transform::Filter {
                column,
                predicate: Predicate::OneOf(set),
            })
        }
        2 => {
            let mut group_by: Vec<String> = Vec::new();
            for _ in 0..rng.gen_range(0..=2) {
                if let Some(g) = pick(rng, table, ANY) {
                    if !group_by.iter().any(|x| x == g) {
                        group_by.push(g.to_string());
                    }
                }
            }
            let mut measures: Vec<Measure> = Vec::new();
            for _ in 0..rng.gen_range(1..=2) {
                let func = *AggregateFn::ALL.choose(rng).unwrap();
                let column = if func == AggregateFn::Count {
                    pick(rng, table, ANY)?
                } else {
                    pick(rng, table, &[Role::Quantitative])?
                };
                let m = Measure {
                    column: column.to_string(),
                    func,
                };
                let name = m.output_name();
                if group_by.contains(&name) || measures.iter().any(|x| x.output_name() == name) {
                    continue;
                }
                measures.push(m);
            }
            if measures.is_empty() {
                return None;
            }
            Some(Transform::Aggregate { group_by, measures })
        }
        3 => {
            let column = pick(rng, table, &[Role::Temporal])?.to_string();
            let unit = *[TimeUnitKind::Year, TimeUnitKind::Quarter, TimeUnitKind::Month]
                .choose(rng)
                .unwrap();
            let t = Transform::TimeUnit { column, unit };
            (!has(table, &t.derived_column().unwrap())).then_some(t)
        }
        4 => {
            let column = pick(rng, table, &[Role::Quantitative])?.to_string();
            let t = Transform::Bin {
                column,
                max_bins: rng.gen_range(1..=20),
            };
            (!has(table, &t.derived_column().unwrap())).then_some(t)
        }
        5 => Some(Transform::Sort {
            column: pick(rng, table, ANY)?.to_string(),
            direction: if rng.gen_bool(0.5) {
                SortDirection::Ascending
            } else {
                SortDirection::Descending
            },
        }),
        6 => Some(Transform::TopK {
            k: rng.gen_range(1..=60),
        }),
        _ => {
            let column = pick(rng, table, &[Role::Quantitative])?.to_string();
            let mode = if rng.gen_bool(0.5) {
                DeltaMode::Difference
            } else {
                DeltaMode::PercentChange
            };
            let t = Transform::WindowDelta { column, mode, lag: 1 };
            (!has(table, &t.derived_column().unwrap())).then_some(t)
        }
    }
}

/// A valid chain of length `0..=max_len`; validity is tracked with the
/// reference evaluator, not the interpreter under test.
pub fn random_chain(rng: &mut impl Rng, table: &Table, max_len: usize) -> Vec<Transform> {
    let len = rng.gen_range(0..=max_len);
    let mut current = RefTable::from_table(table);
    let mut chain = Vec::new();
    let mut attempts = 0;
    while chain.len() < len && attempts < 50 {
        attempts += 1;
        if let Some(t) = random_transform(rng, &current) {
            current = reference_step(&current, &t);
            chain.push(t);
        }
    }
    chain
}
