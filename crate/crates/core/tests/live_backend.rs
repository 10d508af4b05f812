use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use cuechart_core::gateway::{Backend, Gateway, GatewayError, LiveBackend, LiveConfig, Stage, StageError, StagePrompt};
use cuechart_core::stages::analysis;
use serde_json::{json, Value};

type Seen = Vec<(Option<String>, Value)>;

#[derive(Clone)]
struct Mock {
    replies: Arc<Vec<(StatusCode, String)>>,
    seen: Arc<AtomicUsize>,
    bodies: Arc<parking_lot::Mutex<Seen>>,
    delay: Duration,
}

async fn chat(State(mock): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = mock.seen.fetch_add(1, Ordering::SeqCst);
    let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
    mock.bodies.lock().push((auth, body));
    tokio::time::sleep(mock.delay).await;
    let (status, text) = mock.replies[n.min(mock.replies.len() - 1)].clone();
    let reply = json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 120, "completion_tokens": 40}
    });
    (status, Json(reply))
}

async fn serve(replies: Vec<(StatusCode, String)>, delay: Duration) -> (String, Mock) {
    let mock = Mock {
        replies: Arc::new(replies),
        seen: Arc::new(AtomicUsize::new(0)),
        bodies: Arc::default(),
        delay,
    };
    let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(mock.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1"), mock)
}

fn config(endpoint: &str, key_env: &str) -> LiveConfig {
    let mut c = LiveConfig::new(endpoint, "test-model");
    c.api_key_env = key_env.to_string();
    c
}

fn prompt() -> StagePrompt {
    StagePrompt::new(Stage::Analysis, analysis::SHAPE, "system text".into(), "user text".into())
}

const ANALYSIS: &str = r#"{"topic": "warming", "keyPoints": ["recent"], "objectives": ["show trend"]}"#;

#[tokio::test]
async fn sends_chat_request_with_bearer_token() {
    std::env::set_var("CUECHART_TEST_KEY_A", "sekrit");
    let (url, mock) = serve(vec![(StatusCode::OK, ANALYSIS.into())], Duration::ZERO).await;
    let backend = LiveBackend::new(config(&url, "CUECHART_TEST_KEY_A")).unwrap();
    let completion = backend.complete(&prompt()).await.unwrap();
    assert_eq!(completion.text, ANALYSIS);
    assert_eq!(completion.token_counts.unwrap().completion, 40);
    let (auth, body) = mock.bodies.lock()[0].clone();
    assert_eq!(auth.as_deref(), Some("Bearer sekrit"));
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0], json!({"role": "system", "content": "system text"}));
    assert_eq!(body["messages"][1]["role"], "user");
}

#[tokio::test]
async fn prose_reply_is_repaired_once() {
    let replies = vec![
        (StatusCode::OK, "Sure! The topic is warming.".to_string()),
        (StatusCode::OK, format!("```json\n{ANALYSIS}\n```")),
    ];
    let (url, mock) = serve(replies, Duration::ZERO).await;
    let gateway = Gateway::new(Arc::new(LiveBackend::new(config(&url, "CUECHART_TEST_KEY_UNSET")).unwrap()));
    let out = gateway.invoke(&prompt(), analysis::parse).await.unwrap();
    assert!(out.repaired);
    assert_eq!(out.value.topic, "warming");
    assert_eq!(mock.seen.load(Ordering::SeqCst), 2);
    assert!(mock.bodies.lock()[0].0.is_none());
}

#[tokio::test]
async fn two_bad_replies_are_output_invalid() {
    let (url, mock) = serve(vec![(StatusCode::OK, "no".into())], Duration::ZERO).await;
    let gateway = Gateway::new(Arc::new(LiveBackend::new(config(&url, "CUECHART_TEST_KEY_UNSET")).unwrap()));
    let err = gateway.invoke(&prompt(), analysis::parse).await.unwrap_err();
    assert!(matches!(err, StageError::OutputInvalid { stage: Stage::Analysis, .. }), "{err:?}");
    assert_eq!(mock.seen.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn server_error_is_unavailable() {
    let (url, _) = serve(vec![(StatusCode::INTERNAL_SERVER_ERROR, String::new())], Duration::ZERO).await;
    let backend = LiveBackend::new(config(&url, "CUECHART_TEST_KEY_UNSET")).unwrap();
    let err = backend.complete(&prompt()).await.unwrap_err();
    assert!(matches!(err, GatewayError::BackendUnavailable(ref m) if m.contains("500")), "{err:?}");
}

#[tokio::test]
async fn slow_server_times_out() {
    let (url, _) = serve(vec![(StatusCode::OK, ANALYSIS.into())], Duration::from_millis(800)).await;
    let mut c = config(&url, "CUECHART_TEST_KEY_UNSET");
    c.request_timeout = Duration::from_millis(100);
    let backend = LiveBackend::new(c).unwrap();
    let err = backend.complete(&prompt()).await.unwrap_err();
    assert_eq!(err.code(), "BackendTimeout");
}
