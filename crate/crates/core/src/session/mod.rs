//! Live presentation state: transcript, audience profile, the chart on
//! screen, and the round/adoption history.
//!
//! Every mutation is expressed as a [`SessionEvent`]. Applying the event is
//! the only way state changes, so replaying a session's JSONL log through
//! [`SessionState::replay`] reconstructs exactly the in-memory state.

mod log;
mod snapshot;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;

pub use log::{read_log, EventLog, LogLine};
pub use snapshot::SessionSnapshot;

use crate::catalog::{Catalog, TableSchema, Transform};
use crate::orchestrator::SuggestionRound;
use crate::stages::vega::validate_spec;

pub const DEFAULT_CANDIDATES: usize = 8;
pub const DEFAULT_WINDOW: usize = 30;
pub const DEFAULT_DEADLINE_MS: u64 = 10_000;
pub const MAX_INTERESTS: usize = 10;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("UnknownSession: `{0}`")]
    UnknownSession(String),
    #[error("EmptyUtterance")]
    EmptyUtterance,
    #[error("InvalidProfile: {0}")]
    InvalidProfile(String),
    #[error("SpecInvalid: {0}")]
    SpecInvalid(String),
    #[error("UnknownDataset: `{0}`")]
    UnknownDataset(String),
    #[error("UnknownRound: `{0}`")]
    UnknownRound(String),
    #[error("UnknownCandidate: `{0}`")]
    UnknownCandidate(String),
    #[error("CandidateInvalid: `{0}` has no usable spec")]
    CandidateInvalid(String),
    #[error("event log error for {path}: {message}")]
    Log { path: PathBuf, message: String },
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::InvalidConfig(_) => "InvalidConfig",
            SessionError::UnknownSession(_) => "UnknownSession",
            SessionError::EmptyUtterance => "EmptyUtterance",
            SessionError::InvalidProfile(_) => "InvalidProfile",
            SessionError::SpecInvalid(_) => "SpecInvalid",
            SessionError::UnknownDataset(_) => "UnknownDataset",
            SessionError::UnknownRound(_) => "UnknownRound",
            SessionError::UnknownCandidate(_) => "UnknownCandidate",
            SessionError::CandidateInvalid(_) => "CandidateInvalid",
            SessionError::Log { .. } => "EventLog",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SessionConfig {
    pub candidate_count: usize,
    pub window_size: usize,
    pub deadline_ms: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            candidate_count: DEFAULT_CANDIDATES,
            window_size: DEFAULT_WINDOW,
            deadline_ms: DEFAULT_DEADLINE_MS,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.candidate_count == 0 {
            return Err(SessionError::InvalidConfig("candidateCount must be positive".into()));
        }
        if self.window_size == 0 {
            return Err(SessionError::InvalidConfig("windowSize must be positive".into()));
        }
        if self.deadline_ms == 0 {
            return Err(SessionError::InvalidConfig("deadlineMs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Presenter,
    Audience,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Utterance {
    pub seq: u64,
    pub speaker: Speaker,
    pub text: String,
    pub timestamp_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AudienceProfile {
    pub expertise: Level,
    pub domain_familiarity: Level,
    #[serde(default)]
    pub interests: Vec<String>,
}

impl Default for AudienceProfile {
    fn default() -> Self {
        Self {
            expertise: Level::Medium,
            domain_familiarity: Level::Medium,
            interests: Vec::new(),
        }
    }
}

impl AudienceProfile {
    /// Parses a profile from untrusted JSON, reporting enum errors as
    /// `InvalidProfile`.
    pub fn from_json(value: &serde_json::Value) -> Result<Self, SessionError> {
        let profile: AudienceProfile = serde_json::from_value(value.clone())
            .map_err(|e| SessionError::InvalidProfile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.interests.len() > MAX_INTERESTS {
            return Err(SessionError::InvalidProfile(format!(
                "at most {MAX_INTERESTS} interests, got {}",
                self.interests.len()
            )));
        }
        if self.interests.iter().any(|t| t.trim().is_empty()) {
            return Err(SessionError::InvalidProfile("interest tags must be non-empty".into()));
        }
        Ok(())
    }
}

/// Where the chart on screen came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "camelCase")]
pub enum Provenance {
    Prepared,
    #[serde(rename_all = "camelCase")]
    Adopted {
        round_id: String,
        candidate_id: String,
        rationale: String,
    },
}

/// Column table shown instead of a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TableView {
    pub columns: Vec<String>,
    #[serde(default)]
    pub transforms: Vec<Transform>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActiveChart {
    /// Vega-Lite document; `null` when the active view is a table.
    pub spec: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableView>,
    pub dataset_id: String,
    pub title: String,
    pub provenance: Provenance,
}

impl ActiveChart {
    pub fn prepared(dataset_id: impl Into<String>, title: impl Into<String>, spec: serde_json::Value) -> Self {
        Self {
            spec,
            table: None,
            dataset_id: dataset_id.into(),
            title: title.into(),
            provenance: Provenance::Prepared,
        }
    }

    /// Checks the chart against the catalog: dataset must exist and the Vega-Lite
    /// document must pass the subset validator.
    pub fn validate(&self, catalog: &Catalog) -> Result<(), SessionError> {
        let dataset = catalog
            .get(&self.dataset_id)
            .map_err(|_| SessionError::UnknownDataset(self.dataset_id.clone()))?;
        if let Some(table) = &self.table {
            return validate_table_view(table, dataset.schema());
        }
        let report = validate_spec(&self.spec, dataset.schema());
        if !report.valid {
            let codes: Vec<String> = report
                .errors
                .iter()
                .map(|e| format!("{} at {}", e.code.as_str(), e.path))
                .collect();
            return Err(SessionError::SpecInvalid(codes.join("; ")));
        }
        Ok(())
    }
}

fn validate_table_view(view: &TableView, schema: &TableSchema) -> Result<(), SessionError> {
    let out = crate::catalog::chain_schema(schema, &view.transforms)
        .map_err(|e| SessionError::SpecInvalid(e.to_string()))?;
    if view.columns.is_empty() {
        return Err(SessionError::SpecInvalid("table view needs at least one column".into()));
    }
    match view.columns.iter().find(|c| out.column(c).is_none()) {
        Some(c) => Err(SessionError::SpecInvalid(format!("unknown table column `{c}`"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdoptionRecord {
    pub round_id: String,
    pub candidate_id: String,
    pub timestamp_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DismissalRecord {
    pub round_id: String,
    pub candidate_id: String,
    pub timestamp_ms: i64,
}

/// One logged mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "kebab-case")]
pub enum SessionEvent {
    #[serde(rename_all = "camelCase")]
    SessionCreated { session_id: String, config: SessionConfig },
    UtteranceAppended(Utterance),
    ProfileChanged(AudienceProfile),
    ActiveChartSet(ActiveChart),
    RoundRecorded(Box<SuggestionRound>),
    #[serde(rename_all = "camelCase")]
    CandidateAdopted {
        round_id: String,
        candidate_id: String,
        chart: ActiveChart,
    },
    #[serde(rename_all = "camelCase")]
    CandidateDismissed { round_id: String, candidate_id: String },
}

impl SessionEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            SessionEvent::SessionCreated { .. } => "session-created",
            SessionEvent::UtteranceAppended(_) => "utterance-appended",
            SessionEvent::ProfileChanged(_) => "profile-changed",
            SessionEvent::ActiveChartSet(_) => "active-chart-set",
            SessionEvent::RoundRecorded(_) => "round-recorded",
            SessionEvent::CandidateAdopted { .. } => "candidate-adopted",
            SessionEvent::CandidateDismissed { .. } => "candidate-dismissed",
        }
    }
}

/// Full state of one session, reconstructible from its event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionState {
    pub id: String,
    pub config: SessionConfig,
    pub transcript: Vec<Utterance>,
    pub profile: AudienceProfile,
    pub active_chart: Option<ActiveChart>,
    pub rounds: Vec<SuggestionRound>,
    pub adoptions: Vec<AdoptionRecord>,
    pub dismissals: Vec<DismissalRecord>,
}

impl SessionState {
    pub fn new(id: impl Into<String>, config: SessionConfig) -> Self {
        Self {
            id: id.into(),
            config,
            transcript: Vec::new(),
            profile: AudienceProfile::default(),
            active_chart: None,
            rounds: Vec::new(),
            adoptions: Vec::new(),
            dismissals: Vec::new(),
        }
    }

    pub fn apply(&mut self, event: &SessionEvent, timestamp_ms: i64) {
        match event {
            SessionEvent::SessionCreated { session_id, config } => {
                *self = SessionState::new(session_id.clone(), *config);
            }
            SessionEvent::UtteranceAppended(u) => self.transcript.push(u.clone()),
            SessionEvent::ProfileChanged(p) => self.profile = p.clone(),
            SessionEvent::ActiveChartSet(c) => self.active_chart = Some(c.clone()),
            SessionEvent::RoundRecorded(r) => self.rounds.push((**r).clone()),
            SessionEvent::CandidateAdopted {
                round_id,
                candidate_id,
                chart,
            } => {
                self.active_chart = Some(chart.clone());
                self.adoptions.push(AdoptionRecord {
                    round_id: round_id.clone(),
                    candidate_id: candidate_id.clone(),
                    timestamp_ms,
                });
            }
            SessionEvent::CandidateDismissed {
                round_id,
                candidate_id,
            } => self.dismissals.push(DismissalRecord {
                round_id: round_id.clone(),
                candidate_id: candidate_id.clone(),
                timestamp_ms,
            }),
        }
    }

    /// Folds a log back into state. The first line must create the session.
    pub fn replay(lines: &[LogLine]) -> Result<SessionState, String> {
        let mut iter = lines.iter();
        let first = iter.next().ok_or("empty log")?;
        let mut state = match &first.event {
            SessionEvent::SessionCreated { session_id, config } => SessionState::new(session_id.clone(), *config),
            other => return Err(format!("log starts with {}", other.kind())),
        };
        for line in iter {
            state.apply(&line.event, line.timestamp);
        }
        Ok(state)
    }

    pub fn next_seq(&self) -> u64 {
        self.transcript.last().map_or(1, |u| u.seq + 1)
    }

    /// Last `min(W, total)` utterances in seq order.
    pub fn transcript_window(&self) -> &[Utterance] {
        let start = self.transcript.len().saturating_sub(self.config.window_size);
        &self.transcript[start..]
    }

    pub fn round(&self, round_id: &str) -> Option<&SuggestionRound> {
        self.rounds.iter().find(|r| r.round_id == round_id)
    }
}

/// Notification pushed to connected clients.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PushEvent {
    #[serde(rename = "type")]
    pub kind: String,
    pub session_id: String,
    pub timestamp_ms: i64,
    pub payload: serde_json::Value,
}

pub fn now_ms() -> i64 {
    chrono::Utc::now().timestamp_millis()
}

struct SessionHandle {
    state: Mutex<SessionState>,
    log: Option<Mutex<EventLog>>,
    push: broadcast::Sender<PushEvent>,
}

impl SessionHandle {
    /// Applies and persists one event. The caller holds no lock.
    fn commit(&self, event: SessionEvent) -> Result<SessionState, SessionError> {
        self.commit_with(|_| Ok(event))
    }

    /// Builds the event from current state and commits it under one lock, so
    /// concurrent writers to a session are serialized.
    fn commit_with(
        &self,
        build: impl FnOnce(&SessionState) -> Result<SessionEvent, SessionError>,
    ) -> Result<SessionState, SessionError> {
        let timestamp = now_ms();
        let mut state = self.state.lock();
        let event = build(&state)?;
        if let Some(log) = &self.log {
            log.lock().append(&event, timestamp)?;
        }
        state.apply(&event, timestamp);
        let snapshot = state.clone();
        // push while holding the lock keeps event order equal to log order
        self.push(&snapshot.id, push_for(&event), timestamp);
        drop(state);
        Ok(snapshot)
    }

    fn push(&self, session_id: &str, event: Option<(&'static str, serde_json::Value)>, timestamp_ms: i64) {
        if let Some((kind, payload)) = event {
            // no receivers is fine
            let _ = self.push.send(PushEvent {
                kind: kind.to_string(),
                session_id: session_id.to_string(),
                timestamp_ms,
                payload,
            });
        }
    }
}

fn push_for(event: &SessionEvent) -> Option<(&'static str, serde_json::Value)> {
    let json = |v: &dyn erased::Json| v.to_json();
    match event {
        SessionEvent::SessionCreated { .. } => None,
        SessionEvent::UtteranceAppended(u) => Some(("utterance-appended", json(u))),
        SessionEvent::ProfileChanged(p) => Some(("profile-changed", json(p))),
        SessionEvent::ActiveChartSet(c) => Some(("active-chart-set", json(c))),
        SessionEvent::RoundRecorded(r) => Some(("round-complete", json(&**r))),
        SessionEvent::CandidateAdopted {
            round_id,
            candidate_id,
            chart,
        } => Some((
            "chart-adopted",
            serde_json::json!({"roundId": round_id, "candidateId": candidate_id, "chart": chart}),
        )),
        SessionEvent::CandidateDismissed {
            round_id,
            candidate_id,
        } => Some((
            "candidate-dismissed",
            serde_json::json!({"roundId": round_id, "candidateId": candidate_id}),
        )),
    }
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> serde_json::Value;
    }
    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> serde_json::Value {
            serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
        }
    }
}

/// All live sessions of a process.
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    log_dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn new(log_dir: Option<PathBuf>) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            log_dir,
        }
    }

    pub fn log_path(&self, session_id: &str) -> Option<PathBuf> {
        self.log_dir.as_ref().map(|d| EventLog::path_for(d, session_id))
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, SessionError> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn create(&self, config: SessionConfig) -> Result<String, SessionError> {
        config.validate()?;
        let id = uuid::Uuid::new_v4().to_string();
        let log = match &self.log_dir {
            Some(dir) => Some(Mutex::new(EventLog::create(dir, &id)?)),
            None => None,
        };
        let (push, _) = broadcast::channel(256);
        let handle = Arc::new(SessionHandle {
            state: Mutex::new(SessionState::new(id.clone(), config)),
            log,
            push,
        });
        handle.commit(SessionEvent::SessionCreated {
            session_id: id.clone(),
            config,
        })?;
        self.sessions.write().insert(id.clone(), handle);
        Ok(id)
    }

    pub fn exists(&self, id: &str) -> bool {
        self.sessions.read().contains_key(id)
    }

    pub fn state(&self, id: &str) -> Result<SessionState, SessionError> {
        Ok(self.handle(id)?.state.lock().clone())
    }

    pub fn subscribe(&self, id: &str) -> Result<broadcast::Receiver<PushEvent>, SessionError> {
        Ok(self.handle(id)?.push.subscribe())
    }

    /// Sends a transient notification (not logged).
    pub fn notify(&self, id: &str, kind: &'static str, payload: serde_json::Value) -> Result<(), SessionError> {
        let handle = self.handle(id)?;
        handle.push(id, Some((kind, payload)), now_ms());
        Ok(())
    }

    pub fn append_utterance(&self, id: &str, speaker: Speaker, text: &str) -> Result<u64, SessionError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(SessionError::EmptyUtterance);
        }
        let handle = self.handle(id)?;
        let state = handle.commit_with(|state| {
            Ok(SessionEvent::UtteranceAppended(Utterance {
                seq: state.next_seq(),
                speaker,
                text: text.to_string(),
                timestamp_ms: now_ms(),
            }))
        })?;
        Ok(state.transcript.last().map_or(0, |u| u.seq))
    }

    pub fn snapshot(&self, id: &str, catalog: &Catalog) -> Result<SessionSnapshot, SessionError> {
        Ok(self.handle(id)?.state.lock().snapshot(catalog))
    }

    pub fn transcript_window(&self, id: &str) -> Result<Vec<Utterance>, SessionError> {
        Ok(self.handle(id)?.state.lock().transcript_window().to_vec())
    }

    pub fn set_profile(&self, id: &str, profile: AudienceProfile) -> Result<(), SessionError> {
        profile.validate()?;
        self.handle(id)?.commit(SessionEvent::ProfileChanged(profile))?;
        Ok(())
    }

    pub fn set_active_chart(&self, id: &str, chart: ActiveChart, catalog: &Catalog) -> Result<ActiveChart, SessionError> {
        let handle = self.handle(id)?;
        chart.validate(catalog)?;
        handle.commit(SessionEvent::ActiveChartSet(chart.clone()))?;
        Ok(chart)
    }

    pub fn record_round(&self, id: &str, round: SuggestionRound) -> Result<(), SessionError> {
        self.handle(id)?
            .commit(SessionEvent::RoundRecorded(Box::new(round)))?;
        Ok(())
    }

    pub fn round(&self, id: &str, round_id: &str) -> Result<SuggestionRound, SessionError> {
        self.handle(id)?
            .state
            .lock()
            .round(round_id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownRound(round_id.to_string()))
    }

    /// Replaces the active chart with a ranked candidate. Adopting the same
    /// pair twice yields the same chart.
    pub fn adopt(&self, id: &str, round_id: &str, candidate_id: &str) -> Result<ActiveChart, SessionError> {
        let state = self.handle(id)?.commit_with(|state| {
            let round = state
                .round(round_id)
                .ok_or_else(|| SessionError::UnknownRound(round_id.to_string()))?;
            let candidate = round
                .candidate(candidate_id)
                .ok_or_else(|| SessionError::UnknownCandidate(candidate_id.to_string()))?;
            let chart = candidate
                .to_active_chart(round_id)
                .ok_or_else(|| SessionError::CandidateInvalid(candidate_id.to_string()))?;
            Ok(SessionEvent::CandidateAdopted {
                round_id: round_id.to_string(),
                candidate_id: candidate_id.to_string(),
                chart,
            })
        })?;
        Ok(state.active_chart.expect("adoption sets the active chart"))
    }

    /// Logs a dismissal; the active chart is untouched.
    pub fn dismiss(&self, id: &str, round_id: &str, candidate_id: &str) -> Result<(), SessionError> {
        self.handle(id)?.commit_with(|state| {
            let round = state
                .round(round_id)
                .ok_or_else(|| SessionError::UnknownRound(round_id.to_string()))?;
            if round.candidate(candidate_id).is_none() && !round.is_excluded(candidate_id) {
                return Err(SessionError::UnknownCandidate(candidate_id.to_string()));
            }
            Ok(SessionEvent::CandidateDismissed {
                round_id: round_id.to_string(),
                candidate_id: candidate_id.to_string(),
            })
        })?;
        Ok(())
    }

    /// Rebuilds a session from its log file.
    pub fn replay_log(path: &Path) -> Result<SessionState, SessionError> {
        let lines = read_log(path)?;
        SessionState::replay(&lines).map_err(|message| SessionError::Log {
            path: path.to_path_buf(),
            message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> SessionStore {
        SessionStore::new(None)
    }

    #[test]
    fn defaults() {
        let s = store();
        let id = s.create(SessionConfig::default()).unwrap();
        let state = s.state(&id).unwrap();
        assert_eq!(state.config.candidate_count, 8);
        assert_eq!(state.config.window_size, 30);
        assert_eq!(state.profile, AudienceProfile::default());
        assert!(state.active_chart.is_none());
        assert!(state.transcript.is_empty());
    }

    #[test]
    fn zero_candidates_is_invalid() {
        let cfg = SessionConfig {
            candidate_count: 0,
            ..Default::default()
        };
        assert!(matches!(store().create(cfg), Err(SessionError::InvalidConfig(_))));
    }

    #[test]
    fn ids_are_distinct() {
        let s = store();
        assert_ne!(
            s.create(SessionConfig::default()).unwrap(),
            s.create(SessionConfig::default()).unwrap()
        );
    }

    #[test]
    fn seq_numbers_increase() {
        let s = store();
        let id = s.create(SessionConfig::default()).unwrap();
        assert_eq!(s.append_utterance(&id, Speaker::Audience, "hard to see recent trends").unwrap(), 1);
        assert_eq!(
            s.append_utterance(&id, Speaker::Presenter, "let's focus on the most recent 20 years")
                .unwrap(),
            2
        );
        assert!(matches!(s.append_utterance(&id, Speaker::Presenter, "  "), Err(SessionError::EmptyUtterance)));
        assert!(matches!(
            s.append_utterance("nope", Speaker::Presenter, "x"),
            Err(SessionError::UnknownSession(_))
        ));
    }

    #[test]
    fn window_keeps_the_tail() {
        let s = store();
        let id = s.create(SessionConfig::default()).unwrap();
        assert!(s.transcript_window(&id).unwrap().is_empty());
        for i in 0..31 {
            s.append_utterance(&id, Speaker::Presenter, &format!("u{i}")).unwrap();
        }
        let w = s.transcript_window(&id).unwrap();
        assert_eq!(w.len(), 30);
        assert_eq!(w.first().unwrap().seq, 2);
        assert_eq!(w.last().unwrap().seq, 31);
        for i in 0..969 {
            s.append_utterance(&id, Speaker::Audience, &format!("v{i}")).unwrap();
        }
        let w = s.transcript_window(&id).unwrap();
        assert_eq!(w.len(), 30);
        assert_eq!(w.last().unwrap().seq, 1000);
        let all = s.state(&id).unwrap().transcript;
        assert!(all.windows(2).all(|p| p[1].seq == p[0].seq + 1));
    }

    #[test]
    fn profile_rejects_unknown_levels() {
        let err = AudienceProfile::from_json(&serde_json::json!({
            "expertise": "expert", "domainFamiliarity": "low", "interests": []
        }))
        .unwrap_err();
        assert!(matches!(err, SessionError::InvalidProfile(_)));
        let ok = AudienceProfile::from_json(&serde_json::json!({
            "expertise": "high", "domainFamiliarity": "low"
        }))
        .unwrap();
        assert_eq!(ok.expertise, Level::High);
    }

    #[test]
    fn snapshots_are_values() {
        let s = store();
        let id = s.create(SessionConfig::default()).unwrap();
        s.append_utterance(&id, Speaker::Presenter, "one").unwrap();
        let before = s.state(&id).unwrap();
        s.append_utterance(&id, Speaker::Presenter, "two").unwrap();
        assert_eq!(before.transcript.len(), 1);
    }

    #[test]
    fn unknown_round_on_adopt() {
        let s = store();
        let id = s.create(SessionConfig::default()).unwrap();
        assert!(matches!(s.adopt(&id, "round-9", "c0"), Err(SessionError::UnknownRound(_))));
    }
}
