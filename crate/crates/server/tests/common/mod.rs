#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use fhirlit_core::llm::{mock_script, BackendConfig, BackendError, ChatMessage, CompletionResult, LlmBackend, ScriptStep, ToolSpec};
use fhirlit_server::{router, AppState, ServerConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub struct Harness {
    pub dir: TempDir,
    pub state: AppState,
    pub app: Router,
}

pub fn config(dir: &TempDir) -> ServerConfig {
    ServerConfig {
        data_dir: dir.path().to_path_buf(),
        reference_date: chrono::NaiveDate::from_ymd_opt(2023, 12, 1),
        ..ServerConfig::default()
    }
}

pub fn harness_with(
    config: impl FnOnce(&TempDir) -> ServerConfig,
    chat: Arc<dyn LlmBackend>,
    summary: Arc<dyn LlmBackend>,
) -> Harness {
    let dir = TempDir::new().unwrap();
    let state = AppState::with_backends(config(&dir), chat, summary).unwrap();
    let app = router(state.clone());
    Harness { dir, state, app }
}

pub fn harness(chat: Vec<ScriptStep>) -> Harness {
    harness_with(
        config,
        Arc::new(mock_script(chat).unwrap()),
        Arc::new(mock_script(vec![ScriptStep::text("Summary of {user_line:1}")]).unwrap()),
    )
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: axum::http::HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn error_code(&self) -> String {
        self.json()["code"].as_str().unwrap().to_string()
    }

    /// `(event, id, data)` triples of an SSE body.
    pub fn sse(&self) -> Vec<(String, String, Value)> {
        let text = String::from_utf8_lossy(&self.body);
        text.split("\n\n")
            .filter(|block| block.contains("data:"))
            .map(|block| {
                let mut event = String::new();
                let mut id = String::new();
                let mut data = String::new();
                for line in block.lines() {
                    if let Some(v) = line.strip_prefix("event:") {
                        event = v.trim().to_string();
                    } else if let Some(v) = line.strip_prefix("id:") {
                        id = v.trim().to_string();
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.strip_prefix(' ').unwrap_or(v));
                    }
                }
                (event, id, serde_json::from_str(&data).unwrap())
            })
            .collect()
    }
}

pub async fn send(app: &Router, method: Method, uri: &str, body: impl Into<Body>, headers: &[(&str, &str)]) -> Reply {
    let mut request = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        request = request.header(*k, *v);
    }
    let response = app.clone().oneshot(request.body(body.into()).unwrap()).await.unwrap();
    let status = response.status();
    let headers = response.headers().clone();
    let body = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Method::GET, uri, Body::empty(), &[]).await
}

pub async fn post_json(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, Method::POST, uri, body.to_string(), &[("content-type", "application/json")]).await
}

pub async fn upload(app: &Router, fixture: &str) -> String {
    let reply = send(app, Method::POST, "/patients", fhirlit_testkit::fixture_bytes(fixture), &[]).await;
    assert_eq!(reply.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&reply.body));
    reply.json()["patient_id"].as_str().unwrap().to_string()
}

pub async fn open_session(app: &Router, patient_id: &str, locale: &str) -> String {
    let reply = post_json(app, "/sessions", serde_json::json!({"patient_id": patient_id, "locale": locale})).await;
    assert_eq!(reply.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&reply.body));
    reply.json()["session_id"].as_str().unwrap().to_string()
}

pub async fn ask(app: &Router, session_id: &str, text: &str) -> Reply {
    post_json(app, &format!("/sessions/{session_id}/messages"), serde_json::json!({"text": text})).await
}

/// A backend that always fails.
pub struct Failing;

impl LlmBackend for Failing {
    fn complete(&self, _: &[ChatMessage], _: &[ToolSpec], _: &BackendConfig) -> Result<CompletionResult, BackendError> {
        Err(BackendError::Transport("connection refused".into()))
    }

    fn name(&self) -> &str {
        "failing"
    }
}
