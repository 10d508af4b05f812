use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;

use super::{Backend, BackendKind, Completion, GatewayError, StagePrompt};

/// Adds a fixed delay in front of another backend, to exercise latency
/// budgets and fan-out without a network.
pub struct SimulatedBackend {
    delay: Duration,
    inner: Arc<dyn Backend>,
}

impl SimulatedBackend {
    pub fn new(delay: Duration, inner: Arc<dyn Backend>) -> Self {
        Self { delay, inner }
    }
}

#[async_trait]
impl Backend for SimulatedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Simulated
    }

    async fn complete(&self, prompt: &StagePrompt) -> Result<Completion, GatewayError> {
        let started = Instant::now();
        tokio::time::sleep(self.delay).await;
        let mut completion = self.inner.complete(prompt).await?;
        completion.backend = BackendKind::Simulated;
        completion.latency_ms = started.elapsed().as_millis() as u64;
        Ok(completion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ReplayBackend, ReplayMode, Stage};

    #[tokio::test]
    async fn latency_includes_delay() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("analysis.json"), "{}").unwrap();
        let inner = Arc::new(ReplayBackend::new(dir.path(), ReplayMode::Ordered));
        let backend = SimulatedBackend::new(Duration::from_millis(500), inner);
        let prompt = StagePrompt::new(Stage::Analysis, "s", String::new(), String::new());
        let c = backend.complete(&prompt).await.unwrap();
        assert!(c.latency_ms >= 500, "latency {}", c.latency_ms);
        assert_eq!(c.backend, BackendKind::Simulated);
    }
}
