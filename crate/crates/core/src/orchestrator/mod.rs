//! Runs suggestion rounds: stages 1-3 in order, then evaluation and spec
//! generation per candidate, concurrently and bounded, under one deadline.

pub mod cache;
mod offline;
mod round;

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Duration;

use futures::StreamExt;
use parking_lot::Mutex;
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::time::{timeout_at, Instant};

pub use cache::{cache_key, context_digest, StageCache};
pub use offline::{run_offline, OfflineError, OfflineInputs};
pub use round::{CacheHits, RoundStatus, StageTimings, SuggestionRound};

use crate::catalog::{Catalog, DatasetSummary, TableSchema};
use crate::gateway::{Gateway, Stage, StageError, Structured};
use crate::session::{SessionError, SessionSnapshot, SessionStore, TableView};
use crate::stages::analysis::{self, ContextAnalysis};
use crate::stages::evaluation::{self, Flag, RubricScores, ScoredCandidate, SpecSource};
use crate::stages::generation::{self, CandidateDraft, ChartType, Generation};
use crate::stages::selection::{self, DataSelection};
use crate::stages::vega::{self, compile_template, validate_spec};

pub const DEFAULT_PARALLELISM: usize = 8;

#[derive(Debug, Error)]
pub enum RoundError {
    #[error("RoundInFlight: session `{0}` already has a round running")]
    RoundInFlight(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("InsufficientContext: nothing has been said and no chart is shown")]
    InsufficientContext,
    #[error("StageFailed({stage}): {code}: {message}")]
    StageFailed {
        stage: Stage,
        code: String,
        message: String,
    },
    #[error("RoundEmpty: every candidate of {0} was excluded")]
    RoundEmpty(String),
}

impl RoundError {
    pub fn code(&self) -> &'static str {
        match self {
            RoundError::RoundInFlight(_) => "RoundInFlight",
            RoundError::Session(e) => e.code(),
            RoundError::InsufficientContext => "InsufficientContext",
            RoundError::StageFailed { .. } => "StageFailed",
            RoundError::RoundEmpty(_) => "RoundEmpty",
        }
    }

    fn stage(stage: Stage, err: StageError) -> Self {
        let code = match &err {
            StageError::OutputInvalid { .. } => "StageOutputInvalid",
            StageError::Backend { source, .. } => source.code(),
        };
        RoundError::StageFailed {
            stage,
            code: code.to_string(),
            message: err.to_string(),
        }
    }
}

/// Releases the session's single-flight slot on drop.
struct FlightGuard<'a> {
    inflight: &'a Mutex<HashSet<String>>,
    session_id: String,
}

impl Drop for FlightGuard<'_> {
    fn drop(&mut self) {
        self.inflight.lock().remove(&self.session_id);
    }
}

/// Inputs shared by every candidate of one round.
struct RoundCtx<'a> {
    context: Json,
    prompt_version: &'a str,
    analysis: &'a ContextAnalysis,
    selection: &'a DataSelection,
    schema: TableSchema,
    generation: &'a Generation,
    snapshot: &'a SessionSnapshot,
}

struct CandidateOutcome {
    candidate: ScoredCandidate,
    eval_hit: bool,
    /// `None` when the candidate needed no spec call.
    spec_hit: Option<bool>,
    eval_ms: u64,
    spec_ms: u64,
}

pub struct Engine {
    catalog: Arc<Catalog>,
    gateway: Arc<Gateway>,
    sessions: Arc<SessionStore>,
    cache: Arc<StageCache>,
    parallelism: usize,
    inflight: Mutex<HashSet<String>>,
}

fn elapsed_ms(since: Instant) -> u64 {
    since.elapsed().as_millis() as u64
}

impl Engine {
    pub fn new(catalog: Arc<Catalog>, gateway: Arc<Gateway>, sessions: Arc<SessionStore>) -> Self {
        Self {
            catalog,
            gateway,
            sessions,
            cache: Arc::new(StageCache::default()),
            parallelism: DEFAULT_PARALLELISM,
            inflight: Mutex::new(HashSet::new()),
        }
    }

    /// Candidates processed at once. `1` also runs each candidate's
    /// evaluation and spec call one after the other.
    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    /// Shares `cache` with other engines, e.g. across a catalog reload.
    pub fn with_cache(mut self, cache: Arc<StageCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn sessions(&self) -> &Arc<SessionStore> {
        &self.sessions
    }

    pub fn cache(&self) -> &Arc<StageCache> {
        &self.cache
    }

    fn acquire(&self, session_id: &str) -> Result<FlightGuard<'_>, RoundError> {
        if !self.inflight.lock().insert(session_id.to_string()) {
            return Err(RoundError::RoundInFlight(session_id.to_string()));
        }
        Ok(FlightGuard {
            inflight: &self.inflight,
            session_id: session_id.to_string(),
        })
    }

    pub fn round_in_flight(&self, session_id: &str) -> bool {
        self.inflight.lock().contains(session_id)
    }

    /// Runs one round on the session's current state and records it.
    pub async fn run_round(&self, session_id: &str) -> Result<SuggestionRound, RoundError> {
        let snapshot = self.sessions.snapshot(session_id, &self.catalog)?;
        let _guard = self.acquire(session_id)?;
        let round_id = format!("round-{}", snapshot.round_count + 1);
        self.sessions
            .notify(session_id, "round-started", json!({ "roundId": round_id }))?;
        match self.execute(&round_id, &snapshot).await {
            Ok(round) => {
                self.sessions.record_round(session_id, round.clone())?;
                Ok(round)
            }
            Err(err) => {
                let _ = self.sessions.notify(
                    session_id,
                    "round-failed",
                    json!({ "roundId": round_id, "code": err.code(), "message": err.to_string() }),
                );
                Err(err)
            }
        }
    }

    /// The pipeline on a frozen snapshot, without touching session state.
    pub async fn execute(&self, round_id: &str, snapshot: &SessionSnapshot) -> Result<SuggestionRound, RoundError> {
        let started = Instant::now();
        let deadline = started + Duration::from_millis(snapshot.config.deadline_ms);
        let context = context_digest(snapshot);
        let version = snapshot.prompt_version.as_str();
        let n = snapshot.config.candidate_count;
        let mut round = SuggestionRound {
            round_id: round_id.to_string(),
            snapshot_ref: hex::encode(Sha256::digest(context.to_string().as_bytes())),
            status: RoundStatus::Complete,
            candidate_count: n,
            analysis: None,
            selection: None,
            ranked: Vec::new(),
            excluded: Vec::new(),
            dropped_drafts: Vec::new(),
            low_diversity: false,
            timings: StageTimings::default(),
            cache_hits: CacheHits::default(),
            warnings: Vec::new(),
        };
        let expire = |mut round: SuggestionRound, stage: Stage| {
            round.status = RoundStatus::Failed;
            round.warnings.push(format!("deadline expired during {stage}"));
            round.timings.total = elapsed_ms(started);
            round
        };

        // stage 1
        let prompt = analysis::build_prompt(snapshot).map_err(|_| RoundError::InsufficientContext)?;
        let key = cache_key(Stage::Analysis, version, &context, &());
        let t = Instant::now();
        let run = self.cached(&self.cache.analysis, key, || self.gateway.invoke(&prompt, analysis::parse));
        let Ok(result) = timeout_at(deadline, run).await else {
            return Ok(expire(round, Stage::Analysis));
        };
        let (analysis, hit) = result.map_err(|e| RoundError::stage(Stage::Analysis, e))?;
        round.timings.analysis = elapsed_ms(t);
        round.cache_hits.analysis = hit;
        let analysis = analysis.value;
        if analysis.truncated {
            round.warnings.push("analysis lists were truncated to 5 entries".into());
        }
        round.analysis = Some(analysis.clone());

        // stage 2
        let stage_failed = |stage, e: selection::SelectionError| RoundError::StageFailed {
            stage,
            code: e.code().to_string(),
            message: e.to_string(),
        };
        let prompt = selection::build_prompt(&analysis, &snapshot.datasets).map_err(|e| stage_failed(Stage::Selection, e))?;
        let key = cache_key(Stage::Selection, version, &context, &analysis);
        let t = Instant::now();
        let run = self.cached(&self.cache.selection, key, || self.gateway.invoke(&prompt, selection::parse));
        let Ok(result) = timeout_at(deadline, run).await else {
            return Ok(expire(round, Stage::Selection));
        };
        let (raw, hit) = result.map_err(|e| RoundError::stage(Stage::Selection, e))?;
        let selection =
            selection::validate(&raw.value, &snapshot.datasets).map_err(|e| stage_failed(Stage::Selection, e))?;
        round.timings.selection = elapsed_ms(t);
        round.cache_hits.selection = hit;
        round.selection = Some(selection.clone());
        let summary: &DatasetSummary = snapshot
            .dataset(&selection.dataset_id)
            .expect("validated selection names a catalog dataset");
        let schema = selection.schema(summary);

        // stage 3
        let prompt = generation::build_prompt(&analysis, &selection, summary, &snapshot.audience_profile, n);
        let key = cache_key(Stage::Generation, version, &context, &json!([analysis, selection, n]));
        let t = Instant::now();
        let run = self.cached(&self.cache.generation, key, || {
            self.gateway.invoke(&prompt, |v| generation::parse(v, &schema))
        });
        let Ok(result) = timeout_at(deadline, run).await else {
            return Ok(expire(round, Stage::Generation));
        };
        let (parsed, hit) = result.map_err(|e| RoundError::stage(Stage::Generation, e))?;
        let generation = generation::finalize(parsed.value, n);
        round.timings.generation = elapsed_ms(t);
        round.cache_hits.generation = hit;
        round.dropped_drafts = generation.dropped.clone();
        round.low_diversity = generation.low_diversity;
        if generation.low_diversity {
            round.warnings.push("drafts cover fewer than three chart types".into());
        }

        // stages 4 and 5, per candidate
        let ctx = RoundCtx {
            context,
            prompt_version: version,
            analysis: &analysis,
            selection: &selection,
            schema,
            generation: &generation,
            snapshot,
        };
        let t = Instant::now();
        let mut pending = futures::stream::iter(generation.drafts.iter().cloned().map(|d| self.process(&ctx, d)))
            .buffer_unordered(self.parallelism);
        let mut outcomes = Vec::new();
        let mut expired = false;
        loop {
            match timeout_at(deadline, pending.next()).await {
                Ok(Some(outcome)) => outcomes.push(outcome),
                Ok(None) => break,
                Err(_) => {
                    expired = true;
                    break;
                }
            }
        }
        drop(pending);
        round.timings.fanout = elapsed_ms(t);
        round.timings.evaluation = outcomes.iter().map(|o| o.eval_ms).max().unwrap_or(0);
        round.timings.specgen = outcomes.iter().map(|o| o.spec_ms).max().unwrap_or(0);
        round.cache_hits.evaluation = !outcomes.is_empty() && outcomes.iter().all(|o| o.eval_hit);
        let spec_calls: Vec<bool> = outcomes.iter().filter_map(|o| o.spec_hit).collect();
        round.cache_hits.specgen = !spec_calls.is_empty() && spec_calls.iter().all(|h| *h);

        let finished = outcomes.len();
        let (ranked, excluded) = evaluation::rank(outcomes.into_iter().map(|o| o.candidate).collect());
        round.ranked = ranked;
        round.excluded = excluded;
        if expired {
            round.warnings.push(format!(
                "deadline expired with {finished} of {} candidates finished",
                generation.drafts.len()
            ));
            round.status = if round.ranked.is_empty() {
                RoundStatus::Failed
            } else {
                RoundStatus::Partial
            };
        } else if round.ranked.is_empty() {
            return Err(RoundError::RoundEmpty(round_id.to_string()));
        }
        round.timings.total = elapsed_ms(started);
        Ok(round)
    }

    /// Serves `key` from `lru` or runs `call`, caching successes only.
    async fn cached<T, F, Fut>(
        &self,
        lru: &cache::Lru<Structured<T>>,
        key: String,
        call: F,
    ) -> Result<(Structured<T>, bool), StageError>
    where
        T: Clone,
        F: FnOnce() -> Fut,
        Fut: std::future::Future<Output = Result<Structured<T>, StageError>>,
    {
        if let Some(hit) = lru.get(&key) {
            return Ok((hit, true));
        }
        let value = call().await?;
        lru.put(key, value.clone());
        Ok((value, false))
    }

    async fn evaluate(&self, ctx: &RoundCtx<'_>, draft: &CandidateDraft) -> (Result<Structured<RubricScores>, StageError>, bool, u64) {
        let key = cache_key(
            Stage::Evaluation,
            ctx.prompt_version,
            &ctx.context,
            &json!([ctx.analysis, ctx.selection, draft]),
        );
        let prompt = evaluation::build_prompt(draft, ctx.analysis, ctx.selection, &ctx.snapshot.audience_profile);
        let t = Instant::now();
        let result = self
            .cached(&self.cache.evaluation, key, || self.gateway.invoke(&prompt, evaluation::parse))
            .await;
        let ms = elapsed_ms(t);
        match result {
            Ok((value, hit)) => (Ok(value), hit, ms),
            Err(e) => (Err(e), false, ms),
        }
    }

    async fn specify(&self, ctx: &RoundCtx<'_>, draft: &CandidateDraft) -> Option<(Result<Structured<Json>, StageError>, bool, u64)> {
        if draft.chart_type == ChartType::Table {
            return None;
        }
        let dataset = ctx.selection.dataset_id.as_str();
        let key = cache_key(Stage::Specgen, ctx.prompt_version, &ctx.context, &json!([ctx.selection, draft]));
        let prompt = vega::build_prompt(draft, dataset, &ctx.schema);
        let t = Instant::now();
        let result = self
            .cached(&self.cache.specgen, key, || {
                self.gateway
                    .invoke(&prompt, |v| vega::parse_spec(v, draft, dataset, &ctx.schema))
            })
            .await;
        let ms = elapsed_ms(t);
        Some(match result {
            Ok((value, hit)) => (Ok(value), hit, ms),
            Err(e) => (Err(e), false, ms),
        })
    }

    async fn process(&self, ctx: &RoundCtx<'_>, draft: CandidateDraft) -> CandidateOutcome {
        let (eval, spec) = if self.parallelism > 1 {
            tokio::join!(self.evaluate(ctx, &draft), self.specify(ctx, &draft))
        } else {
            let eval = self.evaluate(ctx, &draft).await;
            (eval, self.specify(ctx, &draft).await)
        };
        let mut flags = Vec::new();

        let (eval, eval_hit, eval_ms) = eval;
        let rubric = match eval {
            Ok(s) => {
                if s.repaired {
                    flags.push(Flag::EvalRepaired);
                }
                if s.value.clamped {
                    flags.push(Flag::RubricClamped);
                }
                s.value
            }
            Err(e) => {
                tracing::warn!(candidate = draft.index, error = %e, "evaluation failed");
                flags.push(Flag::EvalFailed);
                RubricScores::zero()
            }
        };

        let dataset = ctx.selection.dataset_id.clone();
        let (spec, table_view, spec_source, spec_hit, spec_ms) = match spec {
            None => (
                None,
                Some(TableView {
                    columns: draft.columns.clone(),
                    transforms: draft.transforms.clone(),
                }),
                SpecSource::None,
                None,
                0,
            ),
            Some((Ok(s), hit, ms)) => {
                if s.repaired {
                    flags.push(Flag::SpecRepaired);
                }
                (Some(s.value), None, SpecSource::Llm, Some(hit), ms)
            }
            Some((Err(e), hit, ms)) => {
                tracing::warn!(candidate = draft.index, error = %e, "spec generation failed, using template");
                match compile_template(&draft, &dataset, &ctx.schema) {
                    Ok(spec) => (Some(spec), None, SpecSource::Template, Some(hit), ms),
                    Err(_) => (None, None, SpecSource::None, Some(hit), ms),
                }
            }
        };
        let validation = spec.as_ref().map(|s| validate_spec(s, &ctx.schema));

        let penalized = ctx.generation.penalized(&draft);
        if penalized {
            flags.push(Flag::LowDiversity);
        }
        flags.sort();
        let final_score = evaluation::final_score(&rubric, penalized);
        CandidateOutcome {
            candidate: ScoredCandidate {
                candidate_id: draft.id(),
                dataset_id: dataset,
                draft,
                rubric,
                final_score,
                spec,
                table_view,
                spec_source,
                validation,
                flags,
            },
            eval_hit,
            spec_hit,
            eval_ms,
            spec_ms,
        }
    }
}
