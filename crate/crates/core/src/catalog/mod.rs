//! Dataset loading, schema inference, column statistics and the transform
//! interpreter every downstream stage is restricted to.

mod schema;
mod stats;
mod table;
mod transform;
mod value;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use schema::{infer_schema, parse_iso_millis, ColumnDescriptor, Role, RoleOverrides, TableSchema, TemporalUnit};
pub use stats::{column_stats, ColumnStats};
pub use table::Table;
pub use transform::{
    apply_transforms, chain_schema, output_schema, parse_transforms, AggregateFn, DeltaMode, Measure,
    Predicate, SortDirection, TimeUnitKind, Transform, TransformError, MAX_BINS,
};
pub use value::Value;

use schema::{classify, duplicate_name, normalize_cell, parse_number, ColumnClass};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("EmptyDataset: `{0}` has no data rows")]
    EmptyDataset(String),
    #[error("MalformedInput at record {record}: {message}")]
    MalformedInput { record: usize, message: String },
    #[error("DuplicateColumn: `{0}`")]
    DuplicateColumn(String),
    #[error("UnknownColumn: `{0}`")]
    UnknownColumn(String),
    #[error("UnknownDataset: `{0}`")]
    UnknownDataset(String),
    #[error("unsupported dataset format for {0}")]
    UnknownFormat(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CatalogError {
    pub fn code(&self) -> &'static str {
        match self {
            CatalogError::EmptyDataset(_) => "EmptyDataset",
            CatalogError::MalformedInput { .. } => "MalformedInput",
            CatalogError::DuplicateColumn(_) => "DuplicateColumn",
            CatalogError::UnknownColumn(_) => "UnknownColumn",
            CatalogError::UnknownDataset(_) => "UnknownDataset",
            CatalogError::UnknownFormat(_) => "UnknownFormat",
            CatalogError::Io { .. } => "Io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    CsvWithHeader,
    JsonArrayOfObjects,
}

impl SourceFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(SourceFormat::CsvWithHeader),
            "json" => Some(SourceFormat::JsonArrayOfObjects),
            _ => None,
        }
    }
}

/// An immutable loaded dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub id: String,
    pub name: String,
    pub fingerprint: String,
    pub table: Table,
}

impl Dataset {
    pub fn schema(&self) -> &TableSchema {
        &self.table.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.table.rows
    }

    pub fn stats(&self, column: &str) -> Result<ColumnStats, CatalogError> {
        column_stats(&self.table, column)
    }
}

/// SHA-256 of the source bytes. Row order is data, so permuting rows changes it.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub role_overrides: RoleOverrides,
}

pub fn load_dataset(
    id: &str,
    bytes: &[u8],
    format: SourceFormat,
    options: &LoadOptions,
) -> Result<Dataset, CatalogError> {
    let (headers, raw_rows) = match format {
        SourceFormat::CsvWithHeader => read_csv(bytes)?,
        SourceFormat::JsonArrayOfObjects => read_json(bytes)?,
    };
    if let Some(dup) = duplicate_name(headers.iter().map(String::as_str)) {
        return Err(CatalogError::DuplicateColumn(dup.to_string()));
    }
    if let Some(pos) = headers.iter().position(|h| h.trim().is_empty()) {
        return Err(CatalogError::MalformedInput {
            record: 0,
            message: format!("column {pos} has an empty name"),
        });
    }
    if raw_rows.is_empty() {
        return Err(CatalogError::EmptyDataset(id.to_string()));
    }

    for (i, name) in headers.iter().enumerate() {
        let cells: Vec<Option<&str>> = raw_rows.iter().map(|r| r[i].as_deref()).collect();
        if classify(name, &cells) == ColumnClass::MixedTemporal {
            return Err(CatalogError::MalformedInput {
                record: 0,
                message: format!("column `{name}` mixes year-only and full-date values"),
            });
        }
    }

    let mut schema = infer_schema(&headers, &raw_rows);
    for column in &mut schema.columns {
        if let Some(role) = options.role_overrides.get(&column.name) {
            column.role = *role;
            if *role != Role::Temporal {
                column.temporal_unit = None;
            }
        }
    }

    let rows = raw_rows
        .iter()
        .enumerate()
        .map(|(r, raw)| {
            schema
                .columns
                .iter()
                .zip(raw)
                .map(|(desc, cell)| convert_cell(desc, cell.as_deref(), r + 1))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Dataset {
        id: id.to_string(),
        name: id.to_string(),
        fingerprint: fingerprint(bytes),
        table: Table::new(schema, rows),
    })
}

fn convert_cell(desc: &ColumnDescriptor, cell: Option<&str>, record: usize) -> Result<Value, CatalogError> {
    let Some(text) = cell else {
        return Ok(Value::Null);
    };
    let bad = |what: &str| CatalogError::MalformedInput {
        record,
        message: format!("`{text}` is not a valid {what} for column `{}`", desc.name),
    };
    match (desc.role, desc.temporal_unit) {
        (Role::Temporal, Some(TemporalUnit::EpochMillis)) => parse_iso_millis(text)
            .map(|ms| Value::Number(ms as f64))
            .ok_or_else(|| bad("date")),
        (Role::Temporal, _) | (Role::Quantitative, _) => {
            parse_number(text).map(Value::Number).ok_or_else(|| bad("number"))
        }
        _ => Ok(Value::Text(text.to_string())),
    }
}

type RawRows = Vec<Vec<Option<String>>>;

fn read_csv(bytes: &[u8]) -> Result<(Vec<String>, RawRows), CatalogError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, 0))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(e, i + 1))?;
        rows.push(record.iter().map(normalize_cell).collect());
    }
    Ok((headers, rows))
}

fn csv_error(err: csv::Error, record: usize) -> CatalogError {
    let record = err
        .position()
        .map(|p| p.record() as usize)
        .unwrap_or(record);
    CatalogError::MalformedInput {
        record,
        message: err.to_string(),
    }
}

fn read_json(bytes: &[u8]) -> Result<(Vec<String>, RawRows), CatalogError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| CatalogError::MalformedInput {
            record: 0,
            message: e.to_string(),
        })?;
    let items = value.as_array().ok_or_else(|| CatalogError::MalformedInput {
        record: 0,
        message: "expected a top-level JSON array".into(),
    })?;

    let mut headers: Vec<String> = Vec::new();
    let mut objects = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let obj = item.as_object().ok_or_else(|| CatalogError::MalformedInput {
            record: i + 1,
            message: "array element is not an object".into(),
        })?;
        for key in obj.keys() {
            if !headers.contains(key) {
                headers.push(key.clone());
            }
        }
        objects.push(obj);
    }

    let rows = objects
        .iter()
        .enumerate()
        .map(|(i, obj)| {
            headers
                .iter()
                .map(|h| match obj.get(h) {
                    None | Some(serde_json::Value::Null) => Ok(None),
                    Some(serde_json::Value::String(s)) => Ok(normalize_cell(s)),
                    Some(serde_json::Value::Number(n)) => Ok(Some(n.to_string())),
                    Some(serde_json::Value::Bool(b)) => Ok(Some(b.to_string())),
                    Some(_) => Err(CatalogError::MalformedInput {
                        record: i + 1,
                        message: format!("nested value in field `{h}`"),
                    }),
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((headers, rows))
}

/// Summary of one dataset as seen by prompts and snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetSummary {
    pub id: String,
    pub name: String,
    pub fingerprint: String,
    pub row_count: usize,
    pub schema: TableSchema,
    pub stats: BTreeMap<String, ColumnStats>,
}

/// All datasets available to a server or offline run, keyed by id.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    datasets: BTreeMap<String, Arc<Dataset>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `.csv` and `.json` file directly under `dir`; the file
    /// stem becomes the dataset id.
    pub fn load_dir(dir: &Path, options: &LoadOptions) -> Result<Self, CatalogError> {
        let io = |source| CatalogError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && SourceFormat::from_path(p).is_some())
            .collect();
        paths.sort();
        let mut catalog = Catalog::new();
        for path in paths {
            catalog.load_file(&path, options)?;
        }
        Ok(catalog)
    }

    pub fn load_file(&mut self, path: &Path, options: &LoadOptions) -> Result<Arc<Dataset>, CatalogError> {
        let format = SourceFormat::from_path(path).ok_or_else(|| CatalogError::UnknownFormat(path.to_path_buf()))?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CatalogError::UnknownFormat(path.to_path_buf()))?
            .to_string();
        if let Some(existing) = self.datasets.get(&id) {
            return Ok(existing.clone());
        }
        let bytes = std::fs::read(path).map_err(|source| CatalogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let dataset = Arc::new(load_dataset(&id, &bytes, format, options)?);
        self.datasets.insert(id, dataset.clone());
        Ok(dataset)
    }

    pub fn insert(&mut self, dataset: Dataset) -> Arc<Dataset> {
        let dataset = Arc::new(dataset);
        self.datasets.insert(dataset.id.clone(), dataset.clone());
        dataset
    }

    pub fn get(&self, id: &str) -> Result<&Arc<Dataset>, CatalogError> {
        self.datasets
            .get(id)
            .ok_or_else(|| CatalogError::UnknownDataset(id.to_string()))
    }

    pub fn datasets(&self) -> impl Iterator<Item = &Arc<Dataset>> {
        self.datasets.values()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn summary(&self, id: &str) -> Result<DatasetSummary, CatalogError> {
        let ds = self.get(id)?;
        let stats = ds
            .schema()
            .names()
            .map(|n| Ok((n.to_string(), ds.stats(n)?)))
            .collect::<Result<_, CatalogError>>()?;
        Ok(DatasetSummary {
            id: ds.id.clone(),
            name: ds.name.clone(),
            fingerprint: ds.fingerprint.clone(),
            row_count: ds.table.row_count(),
            schema: ds.schema().clone(),
            stats,
        })
    }

    pub fn summaries(&self) -> Vec<DatasetSummary> {
        self.datasets
            .keys()
            .filter_map(|id| self.summary(id).ok())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(id: &str, text: &str) -> Result<Dataset, CatalogError> {
        load_dataset(id, text.as_bytes(), SourceFormat::CsvWithHeader, &LoadOptions::default())
    }

    #[test]
    fn header_only_csv_is_empty() {
        assert!(matches!(csv("x", "a,b\n"), Err(CatalogError::EmptyDataset(_))));
    }

    #[test]
    fn duplicate_header_is_rejected() {
        assert!(matches!(csv("x", "a,a\n1,2\n"), Err(CatalogError::DuplicateColumn(c)) if c == "a"));
    }

    #[test]
    fn ragged_row_reports_record() {
        match csv("x", "a,b\n1,2\n3\n") {
            Err(CatalogError::MalformedInput { record, .. }) => assert_eq!(record, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn null_tokens_count_as_nulls() {
        let ds = csv("x", "t\n12.5\n13.1\nn/a\n").unwrap();
        assert_eq!(ds.schema().columns[0].role, Role::Quantitative);
        let stats = ds.stats("t").unwrap();
        assert_eq!(stats.null_count, 1);
        assert_eq!(stats.min, Some(12.5));
        assert_eq!(stats.max, Some(13.1));
    }

    #[test]
    fn mixed_granularity_is_malformed_input() {
        assert!(matches!(
            csv("x", "date,v\n2005,1\n2005-03-01,2\n"),
            Err(CatalogError::MalformedInput { .. })
        ));
    }

    #[test]
    fn json_rows_take_union_of_keys() {
        let ds = load_dataset(
            "j",
            br#"[{"a": 1, "b": "x"}, {"a": 2}]"#,
            SourceFormat::JsonArrayOfObjects,
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(ds.rows()[1], vec![Value::Number(2.0), Value::Null]);
        assert!(ds.schema().columns[1].nullable);
    }

    #[test]
    fn ordinal_only_by_override() {
        let mut options = LoadOptions::default();
        options.role_overrides.insert("size".into(), Role::Ordinal);
        let ds = load_dataset("x", b"size\nS\nM\nL\n", SourceFormat::CsvWithHeader, &options).unwrap();
        assert_eq!(ds.schema().columns[0].role, Role::Ordinal);
    }

    #[test]
    fn fingerprint_tracks_bytes_and_order() {
        let a = csv("x", "v\n1\n2\n").unwrap();
        let b = csv("x", "v\n1\n2\n").unwrap();
        let changed = csv("x", "v\n1\n3\n").unwrap();
        let permuted = csv("x", "v\n2\n1\n").unwrap();
        assert_eq!(a.fingerprint, b.fingerprint);
        assert_ne!(a.fingerprint, changed.fingerprint);
        assert_ne!(a.fingerprint, permuted.fingerprint);
    }

    #[test]
    fn constant_column_has_equal_bounds() {
        let ds = csv("x", "v\n4\n4\n4\n").unwrap();
        let s = ds.stats("v").unwrap();
        assert_eq!(s.min, s.max);
        assert_eq!(s.distinct_count, 1);
    }

    #[test]
    fn unknown_column_stats() {
        let ds = csv("x", "v\n4\n").unwrap();
        assert!(matches!(ds.stats("region"), Err(CatalogError::UnknownColumn(_))));
    }
}
