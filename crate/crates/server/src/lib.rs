//! HTTP and WebSocket surface over the suggestion engine.
//!
//! Every response is an envelope, `{ok, data | error{code, message}, serverTimeMs}`.
//! Pushes for a session arrive on `/sessions/{id}/events`.

mod error;
mod ws;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Query, State};
use axum::response::Response;
use axum::routing::{get, post, put};
use axum::Router;
use serde::Deserialize;
use serde_json::{json, Value as Json};

use cuechart_core::catalog::{apply_transforms, parse_transforms};
use cuechart_core::orchestrator::Engine;
use cuechart_core::session::{ActiveChart, AudienceProfile, SessionConfig, SessionError, Speaker};

pub use error::{envelope, ApiError};

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    /// Config for new sessions; request bodies override single fields.
    pub defaults: SessionConfig,
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine: Arc::new(engine),
            defaults: SessionConfig::default(),
        }
    }

    pub fn with_defaults(mut self, defaults: SessionConfig) -> Self {
        self.defaults = defaults;
        self
    }
}

/// `axum::Json` with rejections rendered as envelopes.
#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
struct Body<T>(T);

type ApiResult = Result<Response, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/utterances", post(append_utterance))
        .route("/sessions/{id}/profile", put(set_profile))
        .route("/sessions/{id}/active-chart", put(set_active_chart))
        .route("/sessions/{id}/rounds", post(run_round))
        .route("/sessions/{id}/rounds/{rid}", get(get_round))
        .route("/sessions/{id}/rounds/{rid}/candidates/{cid}/adopt", post(adopt))
        .route("/sessions/{id}/rounds/{rid}/candidates/{cid}/dismiss", post(dismiss))
        .route("/sessions/{id}/events", get(ws::events))
        .route("/datasets", get(list_datasets))
        .route("/datasets/{id}/slice", get(slice))
        .fallback(|| async { ApiError::new(axum::http::StatusCode::NOT_FOUND, "NotFound", "no such endpoint") })
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Fields missing from the body (or an empty body) take the server defaults.
async fn create_session(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let mut config = s.defaults;
    if !body.iter().all(u8::is_ascii_whitespace) {
        let invalid = |e: serde_json::Error| ApiError::from(SessionError::InvalidConfig(e.to_string()));
        let Json::Object(fields) = serde_json::from_slice(&body).map_err(invalid)? else {
            return Err(SessionError::InvalidConfig("body must be an object".into()).into());
        };
        let mut merged = serde_json::to_value(config).map_err(invalid)?;
        for (k, v) in fields {
            merged[k] = v;
        }
        config = serde_json::from_value(merged).map_err(invalid)?;
    }
    let id = s.engine.sessions().create(config)?;
    Ok(envelope(json!({"sessionId": id, "config": config})))
}

async fn get_session(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    Ok(envelope(s.engine.sessions().snapshot(&id, s.engine.catalog())?))
}

#[derive(Deserialize)]
struct UtteranceBody {
    speaker: Speaker,
    text: String,
}

async fn append_utterance(State(s): State<AppState>, Path(id): Path<String>, Body(b): Body<UtteranceBody>) -> ApiResult {
    let seq = s.engine.sessions().append_utterance(&id, b.speaker, &b.text)?;
    Ok(envelope(json!({"seq": seq})))
}

async fn set_profile(State(s): State<AppState>, Path(id): Path<String>, Body(b): Body<Json>) -> ApiResult {
    let profile = AudienceProfile::from_json(&b)?;
    s.engine.sessions().set_profile(&id, profile.clone())?;
    Ok(envelope(profile))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CandidateRef {
    round_id: String,
    candidate_id: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ActiveChartBody {
    spec: Option<Json>,
    /// Defaults to `data.name` in the chart document.
    dataset_id: Option<String>,
    title: Option<String>,
    candidate_ref: Option<CandidateRef>,
}

async fn set_active_chart(State(s): State<AppState>, Path(id): Path<String>, Body(b): Body<ActiveChartBody>) -> ApiResult {
    let store = s.engine.sessions();
    let chart = match (b.spec, b.candidate_ref) {
        (Some(spec), None) => {
            let dataset = b
                .dataset_id
                .or_else(|| spec.pointer("/data/name").and_then(Json::as_str).map(String::from))
                .ok_or_else(|| SessionError::SpecInvalid("datasetId is required".into()))?;
            let title = b
                .title
                .or_else(|| spec.get("title").and_then(Json::as_str).map(String::from))
                .unwrap_or_default();
            store.set_active_chart(&id, ActiveChart::prepared(dataset, title, spec), s.engine.catalog())?
        }
        (None, Some(r)) => store.adopt(&id, &r.round_id, &r.candidate_id)?,
        _ => {
            return Err(ApiError::from(SessionError::SpecInvalid(
                "send exactly one of `spec` and `candidateRef`".into(),
            )))
        }
    };
    Ok(envelope(chart))
}

async fn run_round(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    Ok(envelope(s.engine.run_round(&id).await?))
}

async fn get_round(State(s): State<AppState>, Path((id, rid)): Path<(String, String)>) -> ApiResult {
    Ok(envelope(s.engine.sessions().round(&id, &rid)?))
}

async fn adopt(State(s): State<AppState>, Path((id, rid, cid)): Path<(String, String, String)>) -> ApiResult {
    Ok(envelope(s.engine.sessions().adopt(&id, &rid, &cid)?))
}

async fn dismiss(State(s): State<AppState>, Path((id, rid, cid)): Path<(String, String, String)>) -> ApiResult {
    s.engine.sessions().dismiss(&id, &rid, &cid)?;
    Ok(envelope(json!({"roundId": rid, "candidateId": cid, "dismissed": true})))
}

async fn list_datasets(State(s): State<AppState>) -> ApiResult {
    Ok(envelope(s.engine.catalog().summaries()))
}

#[derive(Deserialize)]
struct SliceQuery {
    /// JSON array of transforms.
    transforms: Option<String>,
}

async fn slice(
    State(s): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<SliceQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult {
    let Query(q) = query?;
    let dataset = s.engine.catalog().get(&id)?;
    let transforms = match q.transforms.as_deref().map(str::trim) {
        None | Some("") => Vec::new(),
        Some(text) => {
            let value: Json = serde_json::from_str(text)
                .map_err(|e| ApiError::new(axum::http::StatusCode::UNPROCESSABLE_ENTITY, "InvalidRequest", e.to_string()))?;
            parse_transforms(&value)?
        }
    };
    let table = apply_transforms(&dataset.table, &transforms)?;
    Ok(envelope(json!({
        "datasetId": id,
        "schema": table.schema,
        "rowCount": table.row_count(),
        "rows": table.to_records(),
    })))
}
