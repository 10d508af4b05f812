use std::collections::BTreeMap;

use cuechart_core::catalog::{apply_transforms, AggregateFn, Table};
use cuechart_core::stages::generation::{parse_draft, CandidateDraft, Channel, ChartType, EncodingRef};
use cuechart_core::stages::vega::{compile_template, validate_spec, ErrorCode};
use cuechart_testkit::gen::{random_chain, random_table, rng};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

/// A chart draft over `table` after `chain`, with channels drawn from the
/// post-transform columns.
fn random_draft(r: &mut rand_chacha::ChaCha8Rng, table: &Table, seed: u64) -> Option<CandidateDraft> {
    let chain = random_chain(r, table, 4);
    let out = apply_transforms(table, &chain).ok()?;
    let names: Vec<String> = out.schema.columns.iter().map(|c| c.name.clone()).collect();
    let quantitative: Vec<String> = out
        .schema
        .columns
        .iter()
        .filter(|c| c.role == cuechart_core::catalog::Role::Quantitative)
        .map(|c| c.name.clone())
        .collect();
    let chart_type = *[ChartType::Line, ChartType::Bar, ChartType::Pie, ChartType::Scatter].choose(r)?;
    let pick = |r: &mut dyn rand::RngCore, aggregate: bool| {
        let column = names.choose(r).unwrap().clone();
        let aggregate_fn = (aggregate && r.gen_bool(0.3)).then_some(AggregateFn::Count);
        EncodingRef { column, aggregate_fn }
    };
    let mut encoding = BTreeMap::new();
    if chart_type == ChartType::Pie {
        encoding.insert(Channel::Theta, pick(r, true));
        encoding.insert(Channel::Color, pick(r, false));
    } else {
        encoding.insert(Channel::X, pick(r, false));
        let y = match quantitative.choose(r) {
            Some(q) if r.gen_bool(0.3) => EncodingRef {
                column: q.clone(),
                aggregate_fn: Some(AggregateFn::Mean),
            },
            _ => pick(r, true),
        };
        encoding.insert(Channel::Y, y);
        if r.gen_bool(0.3) {
            encoding.insert(Channel::Color, pick(r, false));
        }
    }
    Some(CandidateDraft {
        index: 0,
        chart_type,
        title: format!("draft {seed}"),
        encoding,
        columns: vec![],
        transforms: chain,
        rationale: "generated".into(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn compiled_drafts_validate(seed in any::<u64>()) {
        let mut r = rng(seed);
        let table = random_table(&mut r, 30, 5);
        let Some(draft) = random_draft(&mut r, &table, seed) else { return Ok(()) };
        let reparsed = parse_draft(&serde_json::to_value(&draft).unwrap(), &table.schema);
        prop_assert!(reparsed.is_ok(), "draft rejected: {:?}", reparsed);
        let spec = compile_template(&draft, "t", &table.schema).unwrap();
        let report = validate_spec(&spec, &table.schema);
        prop_assert!(report.valid, "{:?}\n{}", report.errors, spec);
    }

    #[test]
    fn field_resolution_agrees_with_interpreter(seed in any::<u64>()) {
        let mut r = rng(seed);
        let table = random_table(&mut r, 30, 5);
        let Some(draft) = random_draft(&mut r, &table, seed) else { return Ok(()) };
        let spec = compile_template(&draft, "t", &table.schema).unwrap();
        let out = apply_transforms(&table, &draft.transforms).unwrap();
        let mut probes: Vec<String> = table.schema.columns.iter().map(|c| c.name.clone()).collect();
        probes.extend(out.schema.columns.iter().map(|c| c.name.clone()));
        probes.extend(["bin_q0", "mean_q0", "count_n1", "missing"].map(String::from));
        for name in probes {
            let mut probe = spec.clone();
            let channel = if draft.chart_type == ChartType::Pie { "color" } else { "x" };
            probe["encoding"][channel] = json!({"field": name, "type": "nominal"});
            let unresolved = validate_spec(&probe, &table.schema).codes().contains(&ErrorCode::FieldUnresolved);
            prop_assert_eq!(unresolved, out.schema.column(&name).is_none(), "field {}", name);
        }
    }
}
