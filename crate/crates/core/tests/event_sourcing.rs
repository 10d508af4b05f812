use std::sync::Arc;

use cuechart_core::orchestrator::Engine;
use cuechart_core::session::{read_log, SessionConfig, SessionStore, Speaker};
use cuechart_testkit::climate_scenario_dir;
use cuechart_testkit::gen::rng;
use cuechart_testkit::scenario::{catalog, gateway, random_step, replay};
use rand::Rng;

#[tokio::test]
async fn replaying_the_log_reconstructs_live_state() {
    let dir = tempfile::tempdir().unwrap();
    let backend = replay(climate_scenario_dir());
    let store = Arc::new(SessionStore::new(Some(dir.path().to_path_buf())));
    let engine = Engine::new(catalog(), gateway(&backend), store.clone());
    for seed in 0..50u64 {
        let mut r = rng(seed);
        let id = store.create(SessionConfig::default()).unwrap();
        let mut committed = 1;
        for _ in 0..r.gen_range(1..25) {
            if random_step(&engine, &id, &mut r).await {
                committed += 1;
            }
        }
        let path = store.log_path(&id).unwrap();
        assert_eq!(read_log(&path).unwrap().len(), committed, "seed {seed}");
        let replayed = SessionStore::replay_log(&path).unwrap();
        assert_eq!(replayed, store.state(&id).unwrap(), "seed {seed}");
    }
}

#[tokio::test]
async fn failed_mutations_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::new(Some(dir.path().to_path_buf()));
    let id = store.create(SessionConfig::default()).unwrap();
    assert!(store.append_utterance(&id, Speaker::Presenter, "   ").is_err());
    assert!(store.adopt(&id, "round-1", "cand-0").is_err());
    assert!(store.dismiss(&id, "round-1", "cand-0").is_err());
    assert_eq!(read_log(&store.log_path(&id).unwrap()).unwrap().len(), 1);
}
