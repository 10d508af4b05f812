//! Per-stage in-memory LRU caches keyed by a digest of all stage inputs.

use std::num::NonZeroUsize;

use lru::LruCache;
use parking_lot::Mutex;
use serde::Serialize;
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};

use crate::gateway::{collapse_whitespace, Stage, Structured};
use crate::session::{SessionSnapshot, Speaker};
use crate::stages::analysis::ContextAnalysis;
use crate::stages::evaluation::RubricScores;
use crate::stages::generation::ParsedDrafts;
use crate::stages::selection::DataSelection;

pub const CAPACITY: usize = 256;

/// Canonical form of the four context inputs. Round count, session id and
/// timestamps are left out so an unchanged session keys identically.
pub fn context_digest(snapshot: &SessionSnapshot) -> Json {
    let datasets: Vec<Json> = snapshot
        .datasets
        .iter()
        .map(|d| json!([d.id, d.fingerprint]))
        .collect();
    let transcript: Vec<String> = snapshot
        .transcript_window
        .iter()
        .map(|u| {
            let who = match u.speaker {
                Speaker::Presenter => "presenter",
                Speaker::Audience => "audience",
            };
            format!("{who}: {}", collapse_whitespace(&u.text))
        })
        .collect();
    json!({
        "datasets": datasets,
        "activeChart": snapshot.active_chart,
        "transcript": transcript,
        "profile": snapshot.audience_profile,
    })
}

/// `serde_json::Value` keeps object keys sorted, so its compact text is a
/// canonical encoding.
pub fn cache_key(stage: Stage, prompt_version: &str, context: &Json, inputs: &impl Serialize) -> String {
    let doc = json!({
        "stage": stage.as_str(),
        "promptVersion": prompt_version,
        "context": context,
        "inputs": inputs,
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

pub(crate) struct Lru<T>(Mutex<LruCache<String, T>>);

impl<T: Clone> Lru<T> {
    fn new(capacity: usize) -> Self {
        Self(Mutex::new(LruCache::new(NonZeroUsize::new(capacity.max(1)).unwrap())))
    }

    pub(crate) fn get(&self, key: &str) -> Option<T> {
        self.0.lock().get(key).cloned()
    }

    pub(crate) fn put(&self, key: String, value: T) {
        self.0.lock().put(key, value);
    }

    fn len(&self) -> usize {
        self.0.lock().len()
    }

    fn clear(&self) {
        self.0.lock().clear();
    }
}

pub struct StageCache {
    pub(crate) analysis: Lru<Structured<ContextAnalysis>>,
    pub(crate) selection: Lru<Structured<DataSelection>>,
    pub(crate) generation: Lru<Structured<ParsedDrafts>>,
    pub(crate) specgen: Lru<Structured<Json>>,
    pub(crate) evaluation: Lru<Structured<RubricScores>>,
}

impl Default for StageCache {
    fn default() -> Self {
        Self::with_capacity(CAPACITY)
    }
}

impl StageCache {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            analysis: Lru::new(capacity),
            selection: Lru::new(capacity),
            generation: Lru::new(capacity),
            specgen: Lru::new(capacity),
            evaluation: Lru::new(capacity),
        }
    }

    pub fn len(&self, stage: Stage) -> usize {
        match stage {
            Stage::Analysis => self.analysis.len(),
            Stage::Selection => self.selection.len(),
            Stage::Generation => self.generation.len(),
            Stage::Specgen => self.specgen.len(),
            Stage::Evaluation => self.evaluation.len(),
        }
    }

    pub fn clear(&self) {
        self.analysis.clear();
        self.selection.clear();
        self.generation.clear();
        self.specgen.clear();
        self.evaluation.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{AudienceProfile, Level, SessionConfig, Utterance};

    fn snapshot() -> SessionSnapshot {
        SessionSnapshot {
            session_id: "a".into(),
            config: SessionConfig::default(),
            datasets: Vec::new(),
            active_chart: None,
            transcript_window: vec![Utterance {
                seq: 1,
                speaker: Speaker::Presenter,
                text: "focus on  the most recent 20 years".into(),
                timestamp_ms: 1,
            }],
            audience_profile: AudienceProfile::default(),
            prompt_version: "v".into(),
            round_count: 0,
        }
    }

    fn key(s: &SessionSnapshot) -> String {
        cache_key(Stage::Analysis, "v", &context_digest(s), &())
    }

    #[test]
    fn stable_and_sensitive() {
        let a = snapshot();
        let mut b = snapshot();
        b.session_id = "other".into();
        b.round_count = 3;
        b.transcript_window[0].timestamp_ms = 99;
        b.transcript_window[0].text = "focus on the most recent 20 years".into();
        assert_eq!(key(&a), key(&b));

        let mut c = snapshot();
        c.audience_profile.expertise = Level::High;
        assert_ne!(key(&a), key(&c));

        let mut d = snapshot();
        d.transcript_window[0].text = "Focus on the most recent 20 years".into();
        assert_ne!(key(&a), key(&d));
        assert_ne!(
            cache_key(Stage::Analysis, "v", &context_digest(&a), &()),
            cache_key(Stage::Selection, "v", &context_digest(&a), &())
        );
    }

    #[test]
    fn lru_evicts_oldest() {
        let cache: Lru<u32> = Lru::new(2);
        cache.put("a".into(), 1);
        cache.put("b".into(), 2);
        cache.get("a");
        cache.put("c".into(), 3);
        assert_eq!(cache.get("b"), None);
        assert_eq!(cache.get("a"), Some(1));
    }
}
