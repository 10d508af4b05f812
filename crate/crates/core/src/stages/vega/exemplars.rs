//! Few-shot exemplars, one per chart type, compiled into the binary.

use std::sync::LazyLock;

use serde::Deserialize;
use serde_json::Value as Json;

use crate::catalog::TableSchema;
use crate::stages::generation::ChartType;

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Exemplar {
    pub chart_type: ChartType,
    pub dataset: String,
    pub schema: TableSchema,
    pub draft: Json,
    pub spec: Json,
}

const SOURCES: [(&str, &str); 4] = [
    ("line", include_str!("../../../exemplars/line.json")),
    ("bar", include_str!("../../../exemplars/bar.json")),
    ("pie", include_str!("../../../exemplars/pie.json")),
    ("scatter", include_str!("../../../exemplars/scatter.json")),
];

static EXEMPLARS: LazyLock<Vec<Exemplar>> = LazyLock::new(|| {
    SOURCES
        .iter()
        .map(|(name, text)| serde_json::from_str(text).unwrap_or_else(|e| panic!("exemplar {name}: {e}")))
        .collect()
});

pub fn exemplars() -> &'static [Exemplar] {
    &EXEMPLARS
}
