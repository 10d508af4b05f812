use cuechart_core::catalog::Transform;
use cuechart_core::orchestrator::{run_offline, RoundStatus};
use cuechart_core::session::SessionConfig;
use cuechart_core::stages::evaluation::SpecSource;
use cuechart_testkit::climate_scenario_dir;
use cuechart_testkit::scenario::{offline_inputs, replay};
use serde_json::json;

#[tokio::test]
async fn climate_round_ranks_eight_llm_specs() {
    let inputs = offline_inputs(replay(climate_scenario_dir()), SessionConfig::default(), 8);
    let round = run_offline(&inputs).await.unwrap();
    assert_eq!(round.status, RoundStatus::Complete);
    assert_eq!(round.ranked.len(), 8);
    for c in &round.ranked {
        assert_eq!(c.spec_source, SpecSource::Llm, "{} fell back", c.candidate_id);
        assert!(c.validation.as_ref().unwrap().valid);
        assert!(c.flags.is_empty(), "{}: {:?}", c.candidate_id, c.flags);
    }
    let order: Vec<usize> = round.ranked.iter().map(|c| c.draft.index).collect();
    assert_eq!(order, vec![0, 1, 2, 4, 7, 3, 6, 5]);
    let scores: Vec<u32> = round.ranked.iter().map(|c| c.final_score).collect();
    assert_eq!(scores, vec![83, 79, 74, 72, 70, 61, 53, 46]);
    let recent: Transform =
        serde_json::from_value(json!({"type": "filter", "column": "year", "predicate": {"range": [2005, 2025]}})).unwrap();
    assert!(round.ranked[0].draft.transforms.contains(&recent));
}

#[tokio::test]
async fn n_three_requests_three() {
    let config = SessionConfig {
        candidate_count: 3,
        ..SessionConfig::default()
    };
    let round = run_offline(&offline_inputs(replay(climate_scenario_dir()), config, 8)).await.unwrap();
    assert_eq!(round.candidate_count, 3);
    assert_eq!(round.ranked.len(), 3);
}

#[tokio::test]
async fn missing_transcript_names_the_path() {
    let mut inputs = offline_inputs(replay(climate_scenario_dir()), SessionConfig::default(), 8);
    inputs.transcript = inputs.transcript.with_file_name("nope.json");
    let err = run_offline(&inputs).await.unwrap_err();
    assert_eq!(err.code(), "FileNotFound");
    assert!(err.to_string().contains("nope.json"));
}
