//! Vega-Lite images of the catalog transforms, and the inverse used by the
//! validator. Sort, TopK and WindowDelta have no single Vega-Lite equivalent
//! and map to window-based entries; see [`to_vega`].

use serde_json::{json, Map, Value as Json};

use crate::catalog::{
    AggregateFn, DeltaMode, Measure, Predicate, SortDirection, TimeUnitKind, Transform, Value, MAX_BINS,
};

pub const SORT_RANK: &str = "sort_rank";
pub const TOPK_RANK: &str = "topk_rank";

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// `datum.col` or `datum["odd name"]`.
pub fn accessor(column: &str) -> String {
    if is_identifier(column) {
        format!("datum.{column}")
    } else {
        format!("datum[{}]", Json::String(column.to_string()))
    }
}

pub fn lag_column(column: &str) -> String {
    format!("lag_{column}")
}

fn number(n: f64) -> String {
    Value::Number(n).to_string()
}

pub fn range_expr(column: &str, lo: f64, hi: f64) -> String {
    let a = accessor(column);
    format!("{a} >= {} && {a} <= {}", number(lo), number(hi))
}

/// Null-propagating lag-1 expression matching the catalog semantics.
pub fn delta_expr(column: &str, mode: DeltaMode) -> String {
    let cur = accessor(column);
    let prev = accessor(&lag_column(column));
    match mode {
        DeltaMode::Difference => format!("{prev} == null || {cur} == null ? null : {cur} - {prev}"),
        DeltaMode::PercentChange => {
            format!("{prev} == null || {cur} == null || {prev} == 0 ? null : ({cur} - {prev}) / {prev} * 100")
        }
    }
}

fn vega_time_unit(unit: TimeUnitKind) -> &'static str {
    match unit {
        TimeUnitKind::Year => "year",
        TimeUnitKind::Quarter => "yearquarter",
        TimeUnitKind::Month => "yearmonth",
    }
}

pub fn parse_time_unit(s: &str) -> Option<TimeUnitKind> {
    Some(match s {
        "year" => TimeUnitKind::Year,
        "yearquarter" => TimeUnitKind::Quarter,
        "yearmonth" => TimeUnitKind::Month,
        _ => return None,
    })
}

/// One or two Vega-Lite transform entries per catalog transform.
pub fn to_vega(transforms: &[Transform]) -> Vec<Json> {
    let mut out = Vec::new();
    for t in transforms {
        match t {
            Transform::Filter {
                column,
                predicate: Predicate::Range([lo, hi]),
            } => out.push(json!({"filter": range_expr(column, *lo, *hi)})),
            Transform::Filter {
                column,
                predicate: Predicate::OneOf(values),
            } => out.push(json!({"filter": {"field": column, "oneOf": values}})),
            Transform::Aggregate { group_by, measures } => {
                let ops: Vec<Json> = measures
                    .iter()
                    .map(|m| json!({"op": m.func.as_str(), "field": m.column, "as": m.output_name()}))
                    .collect();
                out.push(json!({"aggregate": ops, "groupby": group_by}));
            }
            Transform::TimeUnit { column, unit } => out.push(json!({
                "timeUnit": vega_time_unit(*unit), "field": column, "as": t.derived_column()
            })),
            Transform::Bin { column, max_bins } => out.push(json!({
                "bin": {"maxbins": max_bins}, "field": column, "as": t.derived_column()
            })),
            Transform::Sort { column, direction } => out.push(json!({
                "window": [{"op": "row_number", "as": SORT_RANK}],
                "sort": [{"field": column, "order": direction_str(*direction)}]
            })),
            Transform::TopK { k } => {
                out.push(json!({"window": [{"op": "row_number", "as": TOPK_RANK}]}));
                out.push(json!({"filter": format!("{} <= {k}", accessor(TOPK_RANK))}));
            }
            Transform::WindowDelta { column, mode, .. } => {
                out.push(json!({"window": [{"op": "lag", "field": column, "as": lag_column(column)}]}));
                out.push(json!({"calculate": delta_expr(column, *mode), "as": t.derived_column()}));
            }
        }
    }
    out
}

fn direction_str(d: SortDirection) -> &'static str {
    match d {
        SortDirection::Ascending => "ascending",
        SortDirection::Descending => "descending",
    }
}

/// Rejected entry: index into the Vega-Lite transform array.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageError {
    pub entry: usize,
    pub message: String,
}

/// A catalog transform together with the index of its first Vega-Lite entry.
pub type Parsed = (usize, Transform);

fn keys(map: &Map<String, Json>) -> Vec<&str> {
    let mut k: Vec<&str> = map.keys().map(String::as_str).collect();
    k.sort_unstable();
    k
}

fn parse_comparison(s: &str, op: &str) -> Option<(String, f64)> {
    let (lhs, rhs) = s.split_once(&format!(" {op} "))?;
    let column = if let Some(name) = lhs.strip_prefix("datum.") {
        is_identifier(name).then(|| name.to_string())?
    } else {
        let inner = lhs.strip_prefix("datum[")?.strip_suffix(']')?;
        serde_json::from_str::<String>(inner).ok()?
    };
    let n: f64 = rhs.trim().parse().ok()?;
    n.is_finite().then_some((column, n))
}

fn parse_range_expr(s: &str) -> Option<(String, f64, f64)> {
    let (a, b) = s.split_once(" && ")?;
    let (c1, lo) = parse_comparison(a, ">=")?;
    let (c2, hi) = parse_comparison(b, "<=")?;
    (c1 == c2).then_some((c1, lo, hi))
}

fn json_to_value(v: &Json) -> Option<Value> {
    match v {
        Json::Number(n) => n.as_f64().map(Value::Number),
        Json::String(s) => Some(Value::Text(s.clone())),
        _ => None,
    }
}

/// Reads a Vega-Lite transform array back into catalog transforms. Anything
/// outside the image of [`to_vega`] is an error.
pub fn from_vega(entries: &[Json]) -> Result<Vec<Parsed>, ImageError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < entries.len() {
        let err = |message: String| ImageError { entry: i, message };
        let map = entries[i]
            .as_object()
            .ok_or_else(|| err("transform entry must be an object".into()))?;
        let next = entries.get(i + 1).and_then(Json::as_object);
        let (transform, used) = parse_entry(map, next).map_err(err)?;
        out.push((i, transform));
        i += used;
    }
    Ok(out)
}

fn str_of<'a>(map: &'a Map<String, Json>, key: &str) -> Result<&'a str, String> {
    map.get(key)
        .and_then(Json::as_str)
        .ok_or_else(|| format!("`{key}` must be a string"))
}

fn parse_entry(map: &Map<String, Json>, next: Option<&Map<String, Json>>) -> Result<(Transform, usize), String> {
    match keys(map).as_slice() {
        ["filter"] => match &map["filter"] {
            Json::String(expr) => {
                let (column, lo, hi) =
                    parse_range_expr(expr).ok_or_else(|| format!("unsupported filter expression `{expr}`"))?;
                Ok((
                    Transform::Filter {
                        column,
                        predicate: Predicate::Range([lo, hi]),
                    },
                    1,
                ))
            }
            Json::Object(pred) if keys(pred) == ["field", "oneOf"] => {
                let column = str_of(pred, "field")?.to_string();
                let values = pred["oneOf"]
                    .as_array()
                    .ok_or("`oneOf` must be an array")?
                    .iter()
                    .map(|v| json_to_value(v).ok_or("`oneOf` values must be numbers or strings"))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((
                    Transform::Filter {
                        column,
                        predicate: Predicate::OneOf(values),
                    },
                    1,
                ))
            }
            _ => Err("unsupported filter predicate".into()),
        },
        ["aggregate", "groupby"] | ["aggregate"] => {
            let group_by = match map.get("groupby") {
                None => Vec::new(),
                Some(g) => g
                    .as_array()
                    .ok_or("`groupby` must be an array")?
                    .iter()
                    .map(|v| v.as_str().map(str::to_string).ok_or("`groupby` entries must be strings"))
                    .collect::<Result<_, _>>()?,
            };
            let ops = map["aggregate"].as_array().ok_or("`aggregate` must be an array")?;
            let mut measures = Vec::new();
            for op in ops {
                let op = op.as_object().ok_or("aggregate entries must be objects")?;
                let name = str_of(op, "op")?;
                let func = AggregateFn::parse(name).ok_or_else(|| format!("unsupported aggregate op `{name}`"))?;
                let m = Measure {
                    column: str_of(op, "field")?.to_string(),
                    func,
                };
                if str_of(op, "as")? != m.output_name() {
                    return Err(format!("aggregate output must be named `{}`", m.output_name()));
                }
                measures.push(m);
            }
            Ok((Transform::Aggregate { group_by, measures }, 1))
        }
        ["as", "field", "timeUnit"] => {
            let name = str_of(map, "timeUnit")?;
            let unit = parse_time_unit(name).ok_or_else(|| format!("unsupported timeUnit `{name}`"))?;
            let t = Transform::TimeUnit {
                column: str_of(map, "field")?.to_string(),
                unit,
            };
            expect_as(map, &t)?;
            Ok((t, 1))
        }
        ["as", "bin", "field"] => {
            let max_bins = map["bin"]
                .get("maxbins")
                .and_then(Json::as_u64)
                .filter(|b| (1..=MAX_BINS as u64).contains(b))
                .ok_or_else(|| format!("bin needs maxbins in 1..={MAX_BINS}"))?;
            if map["bin"].as_object().map(|b| b.len()) != Some(1) {
                return Err("bin supports only maxbins".into());
            }
            let t = Transform::Bin {
                column: str_of(map, "field")?.to_string(),
                max_bins: max_bins as u32,
            };
            expect_as(map, &t)?;
            Ok((t, 1))
        }
        ["sort", "window"] => {
            expect_row_number(map, SORT_RANK)?;
            let sort = map["sort"].as_array().filter(|s| s.len() == 1).ok_or("sort must have one key")?;
            let key = sort[0].as_object().ok_or("sort key must be an object")?;
            let direction = match key.get("order").and_then(Json::as_str) {
                Some("ascending") | None => SortDirection::Ascending,
                Some("descending") => SortDirection::Descending,
                Some(o) => return Err(format!("unsupported sort order `{o}`")),
            };
            Ok((
                Transform::Sort {
                    column: str_of(key, "field")?.to_string(),
                    direction,
                },
                1,
            ))
        }
        ["window"] => {
            let op = single_window_op(map)?;
            match str_of(op, "op")? {
                "row_number" if op.get("as").and_then(Json::as_str) == Some(TOPK_RANK) => {
                    let expr = next
                        .filter(|n| keys(n) == ["filter"])
                        .and_then(|n| n["filter"].as_str())
                        .ok_or("topK rank window must be followed by its filter")?;
                    let k = expr
                        .strip_prefix(&format!("{} <= ", accessor(TOPK_RANK)))
                        .and_then(|k| k.parse::<usize>().ok())
                        .filter(|k| *k >= 1)
                        .ok_or_else(|| format!("unsupported topK filter `{expr}`"))?;
                    Ok((Transform::TopK { k }, 2))
                }
                "lag" => {
                    let column = str_of(op, "field")?.to_string();
                    if op.get("as").and_then(Json::as_str) != Some(lag_column(&column).as_str()) {
                        return Err(format!("lag output must be named `{}`", lag_column(&column)));
                    }
                    if op.get("param").is_some_and(|p| p.as_u64() != Some(1)) {
                        return Err("only lag 1 is supported".into());
                    }
                    let calc = next
                        .filter(|n| keys(n) == ["as", "calculate"])
                        .ok_or("lag window must be followed by its calculate")?;
                    let expr = str_of(calc, "calculate")?;
                    let mode = [DeltaMode::Difference, DeltaMode::PercentChange]
                        .into_iter()
                        .find(|m| delta_expr(&column, *m) == expr)
                        .ok_or_else(|| format!("unsupported delta expression `{expr}`"))?;
                    let t = Transform::WindowDelta { column, mode, lag: 1 };
                    expect_as(calc, &t)?;
                    Ok((t, 2))
                }
                other => Err(format!("unsupported window op `{other}`")),
            }
        }
        other => Err(format!("unsupported transform with keys {other:?}")),
    }
}

fn single_window_op(map: &Map<String, Json>) -> Result<&Map<String, Json>, String> {
    map["window"]
        .as_array()
        .filter(|w| w.len() == 1)
        .and_then(|w| w[0].as_object())
        .ok_or_else(|| "window must hold exactly one op".to_string())
}

fn expect_row_number(map: &Map<String, Json>, name: &str) -> Result<(), String> {
    let op = single_window_op(map)?;
    if op.get("op").and_then(Json::as_str) == Some("row_number") && op.get("as").and_then(Json::as_str) == Some(name) {
        Ok(())
    } else {
        Err(format!("sort window must be row_number as `{name}`"))
    }
}

fn expect_as(map: &Map<String, Json>, t: &Transform) -> Result<(), String> {
    let expected = t.derived_column().unwrap_or_default();
    if map.get("as").and_then(Json::as_str) == Some(expected.as_str()) {
        Ok(())
    } else {
        Err(format!("{} output must be named `{expected}`", t.kind()))
    }
}
