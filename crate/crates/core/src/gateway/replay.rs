use std::path::{Path, PathBuf};
use std::time::Instant;

use async_trait::async_trait;

use super::{Backend, BackendKind, Completion, GatewayError, StagePrompt};

/// How replay fixtures are keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplayMode {
    /// `(stage, slot, attempt)`: `analysis.json`, `evaluation-3.json`,
    /// `specgen-3.repair.json`. Survives prompt wording changes.
    #[default]
    Ordered,
    /// `{stage}-{hash}.json` keyed on the normalized prompt, falling back to
    /// the ordered name when no hashed fixture exists.
    Hashed,
}

/// Deterministic backend returning pre-recorded completions from a scenario
/// directory. A missing fixture is an error, never a fabricated reply.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
    mode: ReplayMode,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>, mode: ReplayMode) -> Self {
        Self {
            dir: dir.into(),
            mode,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// File name used in ordered mode for `prompt`.
    pub fn ordered_name(prompt: &StagePrompt) -> String {
        let mut name = prompt.stage.as_str().to_string();
        if let Some(slot) = prompt.slot {
            name.push_str(&format!("-{slot}"));
        }
        if prompt.attempt > 0 {
            name.push_str(".repair");
        }
        name.push_str(".json");
        name
    }

    pub fn hashed_name(prompt: &StagePrompt) -> String {
        format!("{}-{}.json", prompt.stage.as_str(), &prompt.normalized_hash()[..16])
    }

    fn resolve(&self, prompt: &StagePrompt) -> PathBuf {
        if self.mode == ReplayMode::Hashed {
            let hashed = self.dir.join(Self::hashed_name(prompt));
            if hashed.is_file() {
                return hashed;
            }
        }
        self.dir.join(Self::ordered_name(prompt))
    }
}

#[async_trait]
impl Backend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    async fn complete(&self, prompt: &StagePrompt) -> Result<Completion, GatewayError> {
        let started = Instant::now();
        let path = self.resolve(prompt);
        let text = tokio::fs::read_to_string(&path)
            .await
            .map_err(|_| GatewayError::FixtureMissing(path.clone()))?;
        Ok(Completion {
            text,
            backend: BackendKind::Replay,
            latency_ms: started.elapsed().as_millis() as u64,
            token_counts: None,
        })
    }
}
