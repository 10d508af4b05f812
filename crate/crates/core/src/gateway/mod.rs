//! Chat-completion access shared by every pipeline stage.
//!
//! The [`Gateway`] owns one [`Backend`], enforces the per-call timeout,
//! counts calls, and turns raw completions into validated stage outputs with
//! at most one repair request.

mod extract;
mod live;
mod replay;
mod simulated;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use extract::{extract_json, NoJsonFound};
pub use live::{LiveBackend, LiveConfig, DEFAULT_API_KEY_ENV};
pub use replay::{ReplayBackend, ReplayMode};
pub use simulated::SimulatedBackend;

/// The five pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Analysis,
    Selection,
    Generation,
    Specgen,
    Evaluation,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Analysis,
        Stage::Selection,
        Stage::Generation,
        Stage::Specgen,
        Stage::Evaluation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Analysis => "analysis",
            Stage::Selection => "selection",
            Stage::Generation => "generation",
            Stage::Specgen => "specgen",
            Stage::Evaluation => "evaluation",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StagePrompt {
    pub stage: Stage,
    pub system: String,
    pub user: String,
    pub prompt_version: String,
    /// Identifier of the JSON shape the reply must satisfy.
    pub expected_shape: String,
    pub max_tokens: u32,
    pub temperature: f32,
    /// Candidate index for per-candidate stages; replay keys on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<usize>,
    /// 0 for the initial request, 1 for the repair follow-up.
    #[serde(default)]
    pub attempt: u8,
}

impl StagePrompt {
    pub fn new(stage: Stage, expected_shape: &str, system: String, user: String) -> Self {
        Self {
            stage,
            system,
            user,
            prompt_version: crate::PROMPT_VERSION.to_string(),
            expected_shape: expected_shape.to_string(),
            max_tokens: 2048,
            temperature: 0.0,
            slot: None,
            attempt: 0,
        }
    }

    pub fn with_slot(mut self, slot: usize) -> Self {
        self.slot = Some(slot);
        self
    }

    /// Hash of the stage and whitespace-normalized prompt text.
    pub fn normalized_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.stage.as_str());
        hasher.update([0]);
        hasher.update(collapse_whitespace(&self.system));
        hasher.update([0]);
        hasher.update(collapse_whitespace(&self.user));
        hex::encode(hasher.finalize())
    }
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Replay,
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TokenCounts {
    pub prompt: u32,
    pub completion: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Completion {
    pub text: String,
    pub backend: BackendKind,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_counts: Option<TokenCounts>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("BackendTimeout after {0} ms")]
    BackendTimeout(u64),
    #[error("BackendUnavailable: {0}")]
    BackendUnavailable(String),
    #[error("FixtureMissing: {}", .0.display())]
    FixtureMissing(PathBuf),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::BackendTimeout(_) => "BackendTimeout",
            GatewayError::BackendUnavailable(_) => "BackendUnavailable",
            GatewayError::FixtureMissing(_) => "FixtureMissing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StageError {
    #[error("StageOutputInvalid in {stage}: {message}")]
    OutputInvalid { stage: Stage, message: String },
    #[error("{stage} backend call failed: {source}")]
    Backend {
        stage: Stage,
        #[source]
        source: GatewayError,
    },
}

impl StageError {
    pub fn stage(&self) -> Stage {
        match self {
            StageError::OutputInvalid { stage, .. } | StageError::Backend { stage, .. } => *stage,
        }
    }
}

#[async_trait]
pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;
    async fn complete(&self, prompt: &StagePrompt) -> Result<Completion, GatewayError>;
}

/// Backend selection, one kind per gateway.
#[derive(Debug, Clone)]
pub enum BackendConfig {
    Live(LiveConfig),
    Replay { dir: PathBuf, mode: ReplayMode },
    Simulated { per_call_delay: Duration, inner: Box<BackendConfig> },
}

impl BackendConfig {
    pub fn build(&self) -> Result<Arc<dyn Backend>, GatewayError> {
        Ok(match self {
            BackendConfig::Live(cfg) => Arc::new(LiveBackend::new(cfg.clone())?),
            BackendConfig::Replay { dir, mode } => Arc::new(ReplayBackend::new(dir.clone(), *mode)),
            BackendConfig::Simulated {
                per_call_delay,
                inner,
            } => Arc::new(SimulatedBackend::new(*per_call_delay, inner.build()?)),
        })
    }
}

/// A parsed stage output plus how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Structured<T> {
    pub value: T,
    pub repaired: bool,
}

pub const DEFAULT_CALL_TIMEOUT: Duration = Duration::from_secs(30);

pub struct Gateway {
    backend: Arc<dyn Backend>,
    call_timeout: Duration,
    calls: AtomicU64,
    per_stage: Mutex<BTreeMap<Stage, u64>>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.kind())
            .field("call_timeout", &self.call_timeout)
            .field("calls", &self.calls())
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            call_timeout: DEFAULT_CALL_TIMEOUT,
            calls: AtomicU64::new(0),
            per_stage: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_call_timeout(mut self, timeout: Duration) -> Self {
        self.call_timeout = timeout;
        self
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    /// Total backend calls issued so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, stage: Stage) -> u64 {
        self.per_stage.lock().get(&stage).copied().unwrap_or(0)
    }

    pub fn reset_counts(&self) {
        self.calls.store(0, Ordering::SeqCst);
        self.per_stage.lock().clear();
    }

    pub async fn complete(&self, prompt: &StagePrompt) -> Result<Completion, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self.per_stage.lock().entry(prompt.stage).or_default() += 1;
        match tokio::time::timeout(self.call_timeout, self.backend.complete(prompt)).await {
            Ok(result) => result,
            Err(_) => Err(GatewayError::BackendTimeout(self.call_timeout.as_millis() as u64)),
        }
    }

    /// The single follow-up request after a failed parse or shape check.
    pub async fn repair(
        &self,
        prompt: &StagePrompt,
        bad: &Completion,
        shape_error: &str,
    ) -> Result<Completion, GatewayError> {
        self.complete(&repair_prompt(prompt, bad, shape_error)).await
    }

    /// Runs `prompt`, extracts JSON and applies `parse`. On failure, issues
    /// exactly one repair request; a second failure is `StageOutputInvalid`.
    pub async fn invoke<T>(
        &self,
        prompt: &StagePrompt,
        parse: impl Fn(&serde_json::Value) -> Result<T, String>,
    ) -> Result<Structured<T>, StageError> {
        let stage = prompt.stage;
        let backend_err = |source| StageError::Backend { stage, source };
        let attempt = |c: &Completion| {
            extract_json(&c.text)
                .map_err(|e| e.to_string())
                .and_then(|v| parse(&v))
        };

        let first = self.complete(prompt).await.map_err(backend_err)?;
        let shape_error = match attempt(&first) {
            Ok(value) => {
                return Ok(Structured {
                    value,
                    repaired: false,
                })
            }
            Err(e) => e,
        };
        tracing::debug!(%stage, error = %shape_error, "stage output failed validation, repairing");
        let second = self
            .repair(prompt, &first, &shape_error)
            .await
            .map_err(backend_err)?;
        attempt(&second)
            .map(|value| Structured {
                value,
                repaired: true,
            })
            .map_err(|message| StageError::OutputInvalid { stage, message })
    }
}

pub fn repair_prompt(prompt: &StagePrompt, bad: &Completion, shape_error: &str) -> StagePrompt {
    let mut repaired = prompt.clone();
    repaired.attempt = prompt.attempt + 1;
    repaired.user = format!(
        "{}\n\n---\nYour previous reply could not be used.\nPrevious reply:\n{}\n\nProblem: {}\n\
         Reply again with only the corrected JSON for shape `{}`.",
        prompt.user, bad.text, shape_error, prompt.expected_shape
    );
    repaired
}
