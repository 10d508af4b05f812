//! Climate scenario wiring: catalog, sessions and replay-backed engines.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use cuechart_core::catalog::{Catalog, LoadOptions};
use cuechart_core::gateway::{BackendConfig, Gateway, ReplayMode};
use cuechart_core::orchestrator::{Engine, OfflineInputs};
use cuechart_core::session::{ActiveChart, AudienceProfile, Level, SessionConfig, SessionStore, Speaker};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;

use crate::{climate_scenario_dir, climate_session_dir, data_dir};

pub fn catalog() -> Arc<Catalog> {
    Arc::new(Catalog::load_dir(&data_dir(), &LoadOptions::default()).expect("fixture catalog loads"))
}

pub fn replay(dir: impl Into<PathBuf>) -> BackendConfig {
    BackendConfig::Replay {
        dir: dir.into(),
        mode: ReplayMode::Ordered,
    }
}

pub fn simulated(dir: impl Into<PathBuf>, per_call: Duration) -> BackendConfig {
    BackendConfig::Simulated {
        per_call_delay: per_call,
        inner: Box::new(replay(dir)),
    }
}

pub fn gateway(backend: &BackendConfig) -> Arc<Gateway> {
    Arc::new(Gateway::new(backend.build().expect("backend builds")))
}

pub fn engine(catalog: Arc<Catalog>, backend: &BackendConfig, parallelism: usize) -> Engine {
    Engine::new(catalog, gateway(backend), Arc::new(SessionStore::new(None))).with_parallelism(parallelism)
}

#[derive(Deserialize)]
struct Line {
    speaker: Speaker,
    text: String,
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    let bytes = std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn transcript() -> Vec<(Speaker, String)> {
    read::<Vec<Line>>(&climate_session_dir().join("transcript.json"))
        .into_iter()
        .map(|l| (l.speaker, l.text))
        .collect()
}

pub fn chart() -> ActiveChart {
    read(&climate_session_dir().join("chart.json"))
}

pub fn profile() -> AudienceProfile {
    read(&climate_session_dir().join("profile.json"))
}

/// Creates a session on `engine` holding the climate transcript, chart and profile.
pub fn climate_session(engine: &Engine, config: SessionConfig) -> String {
    let store = engine.sessions();
    let id = store.create(config).expect("valid config");
    for (speaker, text) in transcript() {
        store.append_utterance(&id, speaker, &text).unwrap();
    }
    store.set_active_chart(&id, chart(), engine.catalog()).unwrap();
    store.set_profile(&id, profile()).unwrap();
    id
}

pub fn offline_inputs(backend: BackendConfig, config: SessionConfig, parallelism: usize) -> OfflineInputs {
    let session = climate_session_dir();
    OfflineInputs {
        data_dir: data_dir(),
        transcript: session.join("transcript.json"),
        chart: Some(session.join("chart.json")),
        profile: Some(session.join("profile.json")),
        config,
        backend,
        parallelism,
    }
}

/// Copy of the climate scenario in a temp dir, for corrupting single fixtures.
pub fn scenario_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().expect("temp dir");
    for entry in std::fs::read_dir(climate_scenario_dir()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    dir
}

const LEVELS: [Level; 3] = [Level::Low, Level::Medium, Level::High];
const LINES: [&str; 4] = [
    "Let's focus on the most recent 20 years.",
    "Which year was the warmest?",
    "  How   fast is it   rising? ",
    "Compare that with the 1950s.",
];

/// Applies one random session operation (utterance, profile, chart, round,
/// adoption or dismissal); returns whether it committed an event.
pub async fn random_step(engine: &Engine, id: &str, r: &mut impl Rng) -> bool {
    let store = engine.sessions();
    match r.gen_range(0..6) {
        0 | 1 => {
            let speaker = if r.gen_bool(0.5) { Speaker::Presenter } else { Speaker::Audience };
            store.append_utterance(id, speaker, LINES.choose(r).unwrap()).is_ok()
        }
        2 => {
            let profile = AudienceProfile {
                expertise: *LEVELS.choose(r).unwrap(),
                domain_familiarity: *LEVELS.choose(r).unwrap(),
                interests: vec!["warming".into(); r.gen_range(0..3)],
            };
            store.set_profile(id, profile).is_ok()
        }
        3 => {
            let mut c = chart();
            c.title = format!("overview {}", r.gen_range(0..100));
            store.set_active_chart(id, c, engine.catalog()).is_ok()
        }
        4 => engine.run_round(id).await.is_ok(),
        _ => {
            let state = store.state(id).unwrap();
            let Some(round) = state.rounds.choose(r) else { return false };
            let cid = round.ranked.choose(r).unwrap().candidate_id.clone();
            if r.gen_bool(0.6) {
                store.adopt(id, &round.round_id, &cid).is_ok()
            } else {
                store.dismiss(id, &round.round_id, &cid).is_ok()
            }
        }
    }
}
