use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::table::Table;
use super::value::Value;
use super::CatalogError;

const SAMPLE_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ColumnStats {
    /// Present only for quantitative and temporal columns with a non-null cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    pub distinct_count: usize,
    pub null_count: usize,
    pub sample_values: Vec<Value>,
}

/// Full-scan statistics for one column.
pub fn column_stats(table: &Table, column: &str) -> Result<ColumnStats, CatalogError> {
    let idx = table
        .schema
        .index_of(column)
        .ok_or_else(|| CatalogError::UnknownColumn(column.to_string()))?;
    let numeric = table.schema.columns[idx].role.is_numeric();

    let mut min: Option<f64> = None;
    let mut max: Option<f64> = None;
    let mut seen = HashSet::new();
    let mut null_count = 0;
    let mut sample_values = Vec::new();

    for row in &table.rows {
        let cell = &row[idx];
        if cell.is_null() {
            null_count += 1;
            continue;
        }
        if seen.insert(cell.key()) && sample_values.len() < SAMPLE_LIMIT {
            sample_values.push(cell.clone());
        }
        if numeric {
            if let Some(n) = cell.as_f64() {
                min = Some(min.map_or(n, |m| m.min(n)));
                max = Some(max.map_or(n, |m| m.max(n)));
            }
        }
    }

    Ok(ColumnStats {
        min,
        max,
        distinct_count: seen.len(),
        null_count,
        sample_values,
    })
}
