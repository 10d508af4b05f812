//! Table schemas and the deterministic role inference applied at load time.

use std::collections::{BTreeMap, HashSet};
use std::sync::LazyLock;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use regex::Regex;
use serde::{Deserialize, Serialize};

/// Visual encoding role of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Quantitative,
    Nominal,
    Ordinal,
    Temporal,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Quantitative => "quantitative",
            Role::Nominal => "nominal",
            Role::Ordinal => "ordinal",
            Role::Temporal => "temporal",
        }
    }

    /// Quantitative and temporal columns carry numeric cells and a min/max.
    pub fn is_numeric(self) -> bool {
        matches!(self, Role::Quantitative | Role::Temporal)
    }
}

/// Storage unit of a temporal column, fixed per column at load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TemporalUnit {
    /// Cells are integer years.
    Year,
    /// Cells are UTC epoch milliseconds.
    EpochMillis,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ColumnDescriptor {
    pub name: String,
    pub role: Role,
    pub nullable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_unit: Option<TemporalUnit>,
}

impl ColumnDescriptor {
    pub fn new(name: impl Into<String>, role: Role) -> Self {
        let temporal_unit = (role == Role::Temporal).then_some(TemporalUnit::Year);
        Self {
            name: name.into(),
            role,
            nullable: false,
            temporal_unit,
        }
    }

    pub fn nullable(mut self, nullable: bool) -> Self {
        self.nullable = nullable;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnDescriptor>,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnDescriptor>) -> Self {
        Self { columns }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDescriptor> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Schema restricted to `names`, in the order given. Unknown names are skipped.
    pub fn project(&self, names: &[String]) -> TableSchema {
        TableSchema::new(
            names
                .iter()
                .filter_map(|n| self.column(n).cloned())
                .collect(),
        )
    }
}

/// Explicit per-column role assignments applied after inference. This is the
/// only way a column becomes ordinal.
pub type RoleOverrides = BTreeMap<String, Role>;

static TEMPORAL_NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)year|date|time").expect("static regex"));

const NULL_TOKENS: &[&str] = &["", "na", "n/a", "null", "none", "nan"];

/// Raw cell text after null-token normalization.
pub(crate) fn normalize_cell(raw: &str) -> Option<String> {
    let trimmed = raw.trim();
    if NULL_TOKENS
        .iter()
        .any(|t| trimmed.eq_ignore_ascii_case(t))
    {
        None
    } else {
        Some(trimmed.to_string())
    }
}

pub(crate) fn parse_number(s: &str) -> Option<f64> {
    let n: f64 = s.parse().ok()?;
    n.is_finite().then_some(n)
}

fn parse_year(s: &str) -> Option<i64> {
    if s.len() != 4 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let year: i64 = s.parse().ok()?;
    (1000..=2999).contains(&year).then_some(year)
}

/// Parses ISO-8601 dates and datetimes to UTC epoch milliseconds.
pub fn parse_iso_millis(s: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_millis());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp_millis());
    }
    // year-month
    if s.len() == 7 && s.as_bytes()[4] == b'-' {
        if let Ok(d) = NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d") {
            return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp_millis());
        }
    }
    None
}

/// What the inference rules concluded about one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ColumnClass {
    Quantitative,
    TemporalYear,
    TemporalMillis,
    Nominal,
    /// Year-only and full-date values in one temporal-named column.
    MixedTemporal,
}

pub(crate) fn classify(name: &str, cells: &[Option<&str>]) -> ColumnClass {
    let values: Vec<&str> = cells.iter().flatten().copied().collect();
    if values.is_empty() {
        return ColumnClass::Nominal;
    }
    let temporal_name = TEMPORAL_NAME.is_match(name);
    let years = values.iter().filter(|v| parse_year(v).is_some()).count();
    if temporal_name && years == values.len() {
        return ColumnClass::TemporalYear;
    }
    if values.iter().all(|v| parse_number(v).is_some()) {
        return ColumnClass::Quantitative;
    }
    let dates = values
        .iter()
        .filter(|v| parse_iso_millis(v).is_some())
        .count();
    if dates == values.len() {
        return ColumnClass::TemporalMillis;
    }
    if temporal_name && years > 0 && years + dates == values.len() {
        return ColumnClass::MixedTemporal;
    }
    ColumnClass::Nominal
}

/// Assigns a role to every column of `rows`.
///
/// Rows are positional and aligned with `headers`; `None` cells are nulls.
/// Ordinal is never inferred.
pub fn infer_schema(headers: &[String], rows: &[Vec<Option<String>>]) -> TableSchema {
    let columns = headers
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let cells: Vec<Option<&str>> = rows
                .iter()
                .map(|r| r.get(i).and_then(|c| c.as_deref()))
                .collect();
            let nullable = cells.iter().any(Option::is_none);
            let (role, temporal_unit) = match classify(name, &cells) {
                ColumnClass::Quantitative => (Role::Quantitative, None),
                ColumnClass::TemporalYear => (Role::Temporal, Some(TemporalUnit::Year)),
                ColumnClass::TemporalMillis => (Role::Temporal, Some(TemporalUnit::EpochMillis)),
                ColumnClass::Nominal | ColumnClass::MixedTemporal => (Role::Nominal, None),
            };
            ColumnDescriptor {
                name: name.clone(),
                role,
                nullable,
                temporal_unit,
            }
        })
        .collect();
    TableSchema { columns }
}

pub(crate) fn duplicate_name<'a>(names: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    let mut seen = HashSet::new();
    names.into_iter().find(|n| !seen.insert(*n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[&str]) -> Vec<Vec<Option<String>>> {
        values.iter().map(|v| vec![normalize_cell(v)]).collect()
    }

    fn role_of(name: &str, values: &[&str]) -> Role {
        infer_schema(&[name.to_string()], &col(values)).columns[0].role
    }

    #[test]
    fn integer_count_is_quantitative() {
        assert_eq!(role_of("count", &["1", "2", "30"]), Role::Quantitative);
    }

    #[test]
    fn four_digit_years_need_a_temporal_name() {
        assert_eq!(role_of("year", &["1950", "2025"]), Role::Temporal);
        assert_eq!(role_of("Fiscal_Year", &["1999"]), Role::Temporal);
        assert_eq!(role_of("units", &["1950", "2025"]), Role::Quantitative);
        assert_eq!(role_of("year", &["950", "2025"]), Role::Quantitative);
    }

    #[test]
    fn iso_dates_are_temporal_millis() {
        let s = infer_schema(&["d".into()], &col(&["2020-01-01", "2020-02-15T10:00:00Z"]));
        assert_eq!(s.columns[0].role, Role::Temporal);
        assert_eq!(s.columns[0].temporal_unit, Some(TemporalUnit::EpochMillis));
    }

    #[test]
    fn strings_are_nominal_never_ordinal() {
        let regions = ["north", "south", "east", "west"];
        let values: Vec<&str> = (0..76).map(|i| regions[i % 4]).collect();
        assert_eq!(role_of("region", &values), Role::Nominal);
        let many: Vec<String> = (0..200).map(|i| format!("id-{i}")).collect();
        let many: Vec<&str> = many.iter().map(String::as_str).collect();
        assert_eq!(role_of("id", &many), Role::Nominal);
    }

    #[test]
    fn null_tokens_make_columns_nullable() {
        let s = infer_schema(&["t".into()], &col(&["12.5", "13.1", "n/a"]));
        assert_eq!(s.columns[0].role, Role::Quantitative);
        assert!(s.columns[0].nullable);
    }

    #[test]
    fn mixed_granularity_is_detected() {
        assert_eq!(
            classify("date", &[Some("2005"), Some("2005-03-01")]),
            ColumnClass::MixedTemporal
        );
    }

    #[test]
    fn all_null_column_is_nominal() {
        assert_eq!(role_of("x", &["", "n/a"]), Role::Nominal);
    }
}
