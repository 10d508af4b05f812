//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs without the libtest harness so the lines always print.

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cuechart_core::catalog::{apply_transforms, Catalog, LoadOptions, Predicate, Transform};
use cuechart_core::orchestrator::{run_offline, Engine, RoundError, RoundStatus, SuggestionRound};
use cuechart_core::session::{AudienceProfile, Level, SessionConfig, SessionStore, Speaker};
use cuechart_core::stages::evaluation::{Flag, SpecSource};
use cuechart_core::stages::vega::{exemplars, validate_spec};
use cuechart_core::gateway::Stage;
use cuechart_testkit::gen::{random_chain, random_table, rng};
use cuechart_testkit::reference::{reference_apply, RefTable};
use cuechart_testkit::scenario::{
    catalog, chart, climate_session, engine, gateway, offline_inputs, profile, random_step, replay, scenario_copy,
    simulated,
};
use cuechart_testkit::{climate_scenario_dir, climate_session_dir, data_dir, invalid_corpus};
use rand::Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(ok: bool, what: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what.into())
    }
}

/// Ranking contract: descending final score, ties by ascending index.
fn strictly_ordered(round: &SuggestionRound) -> bool {
    round.ranked.windows(2).all(|w| {
        w[0].final_score > w[1].final_score
            || (w[0].final_score == w[1].final_score && w[0].draft.index < w[1].draft.index)
    })
}

fn climate_replay() -> Outcome {
    let session = climate_session_dir();
    let started = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_cuechart"))
        .arg("suggest")
        .arg("--data-dir")
        .arg(data_dir())
        .arg("--transcript")
        .arg(session.join("transcript.json"))
        .arg("--chart")
        .arg(session.join("chart.json"))
        .arg("--profile")
        .arg(session.join("profile.json"))
        .arg("--backend")
        .arg("replay")
        .arg("--replay-dir")
        .arg(climate_scenario_dir())
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    check(output.status.success(), String::from_utf8_lossy(&output.stderr).to_string())?;
    let round: SuggestionRound = serde_json::from_slice(&output.stdout).map_err(|e| e.to_string())?;

    check(round.status == RoundStatus::Complete, format!("status {:?}", round.status))?;
    check(round.ranked.len() == 8, format!("{} ranked", round.ranked.len()))?;

    let recent = Transform::Filter {
        column: "year".into(),
        predicate: Predicate::Range([2005.0, 2025.0]),
    };
    let mark = |spec: &Value| match &spec["mark"] {
        Value::String(m) => m.clone(),
        m => m["type"].as_str().unwrap_or_default().to_string(),
    };
    let has_line = round.ranked.iter().any(|c| {
        c.spec.as_ref().is_some_and(|s| mark(s) == "line") && c.draft.transforms.contains(&recent)
    });
    check(has_line, "no line spec filtered to 2005-2025")?;
    let mean_temp = |spec: &Value| {
        let in_transform = spec["transform"].as_array().into_iter().flatten().any(|t| {
            t["aggregate"].as_array().into_iter().flatten().any(|a| a["op"] == "mean" && a["field"] == "avg_temp_anomaly")
        });
        let in_encoding = spec["encoding"]
            .as_object()
            .into_iter()
            .flat_map(|e| e.values())
            .any(|d| d["aggregate"] == "mean" && d["field"] == "avg_temp_anomaly");
        in_transform || in_encoding
    };
    let has_bar = round
        .ranked
        .iter()
        .any(|c| c.spec.as_ref().is_some_and(|s| mark(s) == "bar" && mean_temp(s)));
    check(has_bar, "no bar spec with a mean of avg_temp_anomaly")?;

    // Validate against the selection schema rebuilt from the catalog, not
    // the report's own validation field.
    let catalog = Catalog::load_dir(&data_dir(), &LoadOptions::default()).map_err(|e| e.to_string())?;
    let selection = round.selection.as_ref().ok_or("no selection")?;
    let schema = selection.schema(&catalog.summary(&selection.dataset_id).map_err(|e| e.to_string())?);
    for c in &round.ranked {
        let spec = c.spec.as_ref().ok_or(format!("{} has no spec", c.candidate_id))?;
        let report = validate_spec(spec, &schema);
        check(report.valid, format!("{}: {:?}", c.candidate_id, report.errors))?;
    }
    check(strictly_ordered(&round), "ranking out of order")?;
    check(elapsed < Duration::from_secs(2), format!("took {elapsed:?}"))?;
    let scores: Vec<u32> = round.ranked.iter().map(|c| c.final_score).collect();
    Ok(format!("8 ranked, scores {scores:?}, {} ms", elapsed.as_millis()))
}

async fn parallelism() -> Outcome {
    let config = SessionConfig {
        deadline_ms: 60_000,
        ..SessionConfig::default()
    };
    let backend = simulated(climate_scenario_dir(), Duration::from_millis(500));
    let timed = |parallelism: usize| {
        let inputs = offline_inputs(backend.clone(), config, parallelism);
        async move {
            let started = Instant::now();
            let round = run_offline(&inputs).await.map_err(|e| e.to_string())?;
            Ok::<_, String>((round, started.elapsed()))
        }
    };
    let (fast, fast_t) = timed(8).await?;
    let (slow, slow_t) = timed(1).await?;
    check(fast.status == RoundStatus::Complete && slow.status == RoundStatus::Complete, "round incomplete")?;
    check(fast_t < Duration::from_millis(2500), format!("parallel took {fast_t:?}"))?;
    check(slow_t >= Duration::from_secs(8), format!("serial took only {slow_t:?}"))?;
    check(fast.content() == slow.content(), "parallel and serial content differ")?;
    Ok(format!("parallel {} ms, serial {} ms, identical content", fast_t.as_millis(), slow_t.as_millis()))
}

fn transform_oracle() -> Outcome {
    let mut mismatches = Vec::new();
    let mut steps = 0;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let table = random_table(&mut r, 50, 5);
        let chain = random_chain(&mut r, &table, 4);
        steps += chain.len();
        let expected = reference_apply(&RefTable::from_table(&table), &chain);
        match apply_transforms(&table, &chain) {
            Ok(actual) => {
                if let Some(diff) = expected.diff(&actual) {
                    mismatches.push(format!("seed {seed}: {diff}"));
                }
            }
            Err(e) => mismatches.push(format!("seed {seed}: {e}")),
        }
    }
    check(mismatches.is_empty(), mismatches.join("; "))?;
    Ok(format!("100 tables, {steps} transforms, 0 mismatches"))
}

fn validator_corpus() -> Outcome {
    check(exemplars().len() == 4, "expected 4 exemplars")?;
    for e in exemplars() {
        let report = validate_spec(&e.spec, &e.schema);
        check(report.valid, format!("exemplar {}: {:?}", e.chart_type.as_str(), report.errors))?;
    }
    let corpus = invalid_corpus();
    check(corpus.cases.len() == 20, format!("{} invalid cases", corpus.cases.len()))?;
    for case in &corpus.cases {
        let report = validate_spec(&case.spec, &corpus.schema);
        let mut codes: Vec<&str> = report.codes().iter().map(|c| c.as_str()).collect();
        codes.sort_unstable();
        check(!report.valid && codes == case.expected, format!("{}: got {codes:?}", case.name))?;
    }
    Ok("4 exemplars accepted, 20 invalid specs rejected with expected codes".into())
}

async fn cache() -> Outcome {
    let backend = replay(climate_scenario_dir());
    let engine = engine(catalog(), &backend, 8);
    let id = climate_session(&engine, SessionConfig::default());
    let err = |e: RoundError| e.to_string();
    let cold = engine.run_round(&id).await.map_err(err)?;
    engine.gateway().reset_counts();
    let warm = engine.run_round(&id).await.map_err(err)?;
    check(engine.gateway().calls() == 0, format!("{} calls on warm run", engine.gateway().calls()))?;
    check(warm.cache_hits.all(), "warm run missed a stage")?;
    check(warm.content() == cold.content(), "warm content differs from cold")?;

    let store = engine.sessions().clone();
    let mut misses = Vec::new();
    store
        .append_utterance(&id, Speaker::Audience, "What about the 1990s?")
        .map_err(|e| e.to_string())?;
    misses.push(("transcript", engine.run_round(&id).await.map_err(err)?.cache_hits.analysis));
    let mut c = chart();
    c.title = "Temperature overview".into();
    store.set_active_chart(&id, c, engine.catalog()).map_err(|e| e.to_string())?;
    misses.push(("active chart", engine.run_round(&id).await.map_err(err)?.cache_hits.analysis));
    let p = AudienceProfile {
        domain_familiarity: Level::High,
        ..profile()
    };
    store.set_profile(&id, p).map_err(|e| e.to_string())?;
    misses.push(("profile", engine.run_round(&id).await.map_err(err)?.cache_hits.analysis));

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for name in ["climate.csv", "sales.csv"] {
        std::fs::copy(data_dir().join(name), dir.path().join(name)).map_err(|e| e.to_string())?;
    }
    let csv = dir.path().join("climate.csv");
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    std::fs::write(&csv, text + "1949,-0.11\n").map_err(|e| e.to_string())?;
    let reloaded = Arc::new(Catalog::load_dir(dir.path(), &LoadOptions::default()).map_err(|e| e.to_string())?);
    let other = Engine::new(reloaded, engine.gateway().clone(), store).with_cache(engine.cache().clone());
    misses.push(("dataset bytes", other.run_round(&id).await.map_err(err)?.cache_hits.analysis));

    let hit: Vec<&str> = misses.iter().filter(|(_, h)| *h).map(|(n, _)| *n).collect();
    check(hit.is_empty(), format!("analysis still hit after changing {hit:?}"))?;
    Ok("warm run 0 calls with identical content; each of 4 inputs forces an analysis miss".into())
}

async fn robustness() -> Outcome {
    let run = |dir: std::path::PathBuf| async move {
        let engine = engine(catalog(), &replay(dir), 8);
        let id = climate_session(&engine, SessionConfig::default());
        let result = engine.run_round(&id).await;
        let rounds = engine.sessions().state(&id).map(|s| s.rounds.len()).unwrap_or(usize::MAX);
        (result, rounds)
    };

    let spec = scenario_copy();
    std::fs::write(spec.path().join("specgen-4.json"), "{\"mark\": \"bar\", \"encoding\": ").map_err(|e| e.to_string())?;
    let (round, _) = run(spec.path().to_path_buf()).await;
    let round = round.map_err(|e| e.to_string())?;
    let c = round.candidate("cand-4").ok_or("cand-4 missing")?;
    check(round.status == RoundStatus::Complete, "spec corruption: round not complete")?;
    check(c.spec_source == SpecSource::Template, format!("spec corruption: source {:?}", c.spec_source))?;

    let eval = scenario_copy();
    std::fs::write(eval.path().join("evaluation-1.json"), "relevance: very").map_err(|e| e.to_string())?;
    let (round, _) = run(eval.path().to_path_buf()).await;
    let round = round.map_err(|e| e.to_string())?;
    let c = round.candidate("cand-1").ok_or("cand-1 missing")?;
    let r = &c.rubric;
    check(round.status == RoundStatus::Complete, "eval corruption: round not complete")?;
    check((r.relevance, r.audience_fit, r.data_validity) == (0, 0, 0), "eval corruption: rubric not zero")?;
    check(c.has_flag(Flag::EvalFailed), "eval corruption: no evalFailed flag")?;

    let analysis = scenario_copy();
    std::fs::write(analysis.path().join("analysis.json"), "Happy to help! What would you like?").map_err(|e| e.to_string())?;
    std::fs::write(analysis.path().join("analysis.repair.json"), "{\"topic\": \"climate\"}").map_err(|e| e.to_string())?;
    let (result, rounds) = run(analysis.path().to_path_buf()).await;
    match result {
        Err(RoundError::StageFailed { stage: Stage::Analysis, .. }) => {}
        other => return Err(format!("analysis corruption: {other:?}")),
    }
    check(rounds == 0, "analysis corruption: a round was recorded")?;
    Ok("template fallback, zero rubric + evalFailed, StageFailed{analysis} with nothing recorded".into())
}

async fn event_sourcing() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Arc::new(SessionStore::new(Some(dir.path().to_path_buf())));
    let engine = Engine::new(catalog(), gateway(&replay(climate_scenario_dir())), store.clone());
    let mut operations = 0;
    for seed in 0..50u64 {
        let mut r = rng(1000 + seed);
        let id = store.create(SessionConfig::default()).map_err(|e| e.to_string())?;
        for _ in 0..r.gen_range(1..30) {
            if random_step(&engine, &id, &mut r).await {
                operations += 1;
            }
        }
        let path = store.log_path(&id).ok_or("no log path")?;
        let replayed = SessionStore::replay_log(&path).map_err(|e| e.to_string())?;
        check(replayed == store.state(&id).map_err(|e| e.to_string())?, format!("seed {seed}: replay differs"))?;
    }
    Ok(format!("50 sequences, {operations} committed operations, replay equals live state"))
}

#[tokio::main]
async fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("climate scenario replay", climate_replay()));
    results.push(("parallelism", parallelism().await));
    results.push(("transform oracle", transform_oracle()));
    results.push(("validator corpus", validator_corpus()));
    results.push(("cache", cache().await));
    results.push(("robustness", robustness().await));
    results.push(("event sourcing", event_sourcing().await));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
