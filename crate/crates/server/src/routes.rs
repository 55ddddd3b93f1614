use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::panic::AssertUnwindSafe;
use std::sync::atomic::Ordering;
use std::time::Instant;

use axum::body::{Body, Bytes};
use axum::extract::{MatchedPath, Path, Query, Request, State};
use axum::http::{HeaderMap, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use fhirlit_core::chat::{EventKind, SessionEvent};
use fhirlit_core::locale::is_valid_locale;
use fhirlit_core::pipeline::CatalogEntry;
use fhirlit_core::summarizer::CacheKey;
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::mpsc;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::{ApiError, ErrorCode};
use crate::state::{AppState, PatientRecord, SessionHandle};

pub fn router(state: AppState) -> Router {
    let mut router = Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/metrics", get(metrics))
        .route("/patients", post(upload_patient).get(list_patients))
        .route("/patients/{patient_id}", get(get_patient))
        .route("/patients/{patient_id}/resources", get(list_resources))
        .route("/patients/{patient_id}/resources/{resource_id}/summary", get(resource_summary))
        .route(
            "/patients/{patient_id}/resources/{resource_id}/interpretation",
            get(resource_interpretation),
        )
        .route("/sessions", post(open_session))
        .route("/sessions/{session_id}", get(get_session).delete(close_session))
        .route("/sessions/{session_id}/messages", post(post_message))
        .route("/sessions/{session_id}/context", delete(clear_context))
        .route("/sessions/{session_id}/events", get(replay_events))
        .layer(middleware::from_fn(log_request));
    let origins = &state.config().cors_allowed_origins;
    if !origins.is_empty() {
        let origins = origins.iter().filter_map(|o| o.parse().ok()).collect::<Vec<_>>();
        router = router.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([Method::GET, Method::POST, Method::DELETE])
                .allow_headers([axum::http::header::CONTENT_TYPE, "last-event-id".parse().expect("valid header")]),
        );
    }
    router.with_state(state)
}

/// Logs route templates, status and timing only; never bodies or names.
async fn log_request(request: Request, next: Next) -> Response {
    let method = request.method().clone();
    let route = request
        .extensions()
        .get::<MatchedPath>()
        .map(|p| p.as_str().to_owned())
        .unwrap_or_else(|| "unmatched".into());
    let started = Instant::now();
    let response = next.run(request).await;
    tracing::info!(
        %method,
        route,
        status = response.status().as_u16(),
        elapsed_ms = started.elapsed().as_millis() as u64,
        "request"
    );
    response
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(ErrorCode::InvalidRequest, format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

async fn metrics(State(state): State<AppState>) -> impl IntoResponse {
    let (patients, sessions) = state.counts();
    Json(state.metrics().snapshot(patients, sessions))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientView {
    pub patient_id: String,
    pub display_name: String,
    pub patient: fhirlit_core::fhir::PatientSummary,
    pub catalog_size: usize,
    /// Catalog entries per resource kind.
    pub counts: BTreeMap<String, usize>,
    pub uploaded_at: chrono::DateTime<chrono::Utc>,
}

impl From<&PatientRecord> for PatientView {
    fn from(record: &PatientRecord) -> Self {
        let mut counts = BTreeMap::new();
        for entry in &record.catalog.entries {
            *counts.entry(entry.identifier.kind.as_str().to_owned()).or_default() += 1;
        }
        Self {
            patient_id: record.patient_id.clone(),
            display_name: record.catalog.patient.display_name(),
            patient: record.catalog.patient.clone(),
            catalog_size: record.catalog.len(),
            counts,
            uploaded_at: record.uploaded_at,
        }
    }
}

async fn upload_patient(State(state): State<AppState>, body: Body) -> Result<Response, ApiError> {
    let limit = state.config().max_body_bytes;
    let bytes = axum::body::to_bytes(body, limit).await.map_err(|_| {
        ApiError::new(ErrorCode::TooLarge, format!("bundle exceeds the {limit}-byte upload limit"))
    })?;
    let size = bytes.len();
    let record = {
        let state = state.clone();
        blocking(move || state.add_patient(&bytes)).await??
    };
    tracing::info!(patient_id = %record.patient_id, bytes = size, entries = record.catalog.len(), "patient stored");
    Ok((StatusCode::CREATED, Json(PatientView::from(record.as_ref()))).into_response())
}

async fn list_patients(State(state): State<AppState>) -> Json<Vec<PatientView>> {
    Json(state.patients().iter().map(|p| PatientView::from(p.as_ref())).collect())
}

async fn get_patient(State(state): State<AppState>, Path(patient_id): Path<String>) -> Result<Json<PatientView>, ApiError> {
    Ok(Json(PatientView::from(state.patient(&patient_id)?.as_ref())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResourceView {
    pub resource_id: String,
    pub kind: String,
    pub display_name: String,
    pub date: Option<String>,
    pub identifier: String,
}

impl From<&CatalogEntry> for ResourceView {
    fn from(entry: &CatalogEntry) -> Self {
        Self {
            resource_id: entry.envelope.logical_id.clone(),
            kind: entry.identifier.kind.as_str().to_owned(),
            display_name: entry.identifier.display_name.clone(),
            date: entry.identifier.date.as_ref().map(|d| d.original().to_owned()),
            identifier: entry.rendered.clone(),
        }
    }
}

async fn list_resources(
    State(state): State<AppState>,
    Path(patient_id): Path<String>,
) -> Result<Json<Vec<ResourceView>>, ApiError> {
    let patient = state.patient(&patient_id)?;
    Ok(Json(patient.catalog.entries.iter().map(ResourceView::from).collect()))
}

fn requested_locale(state: &AppState, query: &HashMap<String, String>) -> Result<String, ApiError> {
    let locale = query.get("locale").cloned().unwrap_or_else(|| state.config().session.locale.clone());
    if !is_valid_locale(&locale) {
        return Err(ApiError::new(ErrorCode::InvalidRequest, format!("invalid locale tag {locale:?}")));
    }
    Ok(locale)
}

fn catalog_entry(patient: &PatientRecord, resource_id: &str) -> Result<CatalogEntry, ApiError> {
    patient
        .catalog
        .by_logical_id(resource_id)
        .cloned()
        .ok_or_else(|| ApiError::new(ErrorCode::ResourceNotFound, format!("no resource {resource_id} in this catalog")))
}

async fn resource_summary(
    State(state): State<AppState>,
    Path((patient_id, resource_id)): Path<(String, String)>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let locale = requested_locale(&state, &query)?;
    let entry = catalog_entry(&*state.patient(&patient_id)?, &resource_id)?;
    let metrics = state.metrics();
    metrics.summary_requests.fetch_add(1, Ordering::Relaxed);
    let key = CacheKey {
        logical_id: entry.envelope.logical_id.clone(),
        content_hash: entry.envelope.content_hash(),
        locale: locale.clone(),
    };
    let cached = state.summarizer().cache().get(&key).is_some();
    if cached {
        metrics.summary_cache_hits.fetch_add(1, Ordering::Relaxed);
    }
    let started = Instant::now();
    let summarizer = state.summarizer().clone();
    let summary = blocking(move || summarizer.summarize_entry(&entry, &locale)).await??;
    let micros = started.elapsed().as_micros() as u64;
    metrics.summary_latency_micros_total.fetch_add(micros, Ordering::Relaxed);
    tracing::info!(%patient_id, %resource_id, cached, micros, "summary served");
    Ok(Json(summary).into_response())
}

async fn resource_interpretation(
    State(state): State<AppState>,
    Path((patient_id, resource_id)): Path<(String, String)>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let locale = requested_locale(&state, &query)?;
    let entry = catalog_entry(&*state.patient(&patient_id)?, &resource_id)?;
    let summarizer = state.summarizer().clone();
    let interpretation = blocking(move || summarizer.interpret_resource(&entry.envelope, &locale)).await??;
    Ok(Json(interpretation).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenSession {
    patient_id: String,
    locale: Option<String>,
}

async fn open_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let request: OpenSession = parse_json(&body)?;
    let handle = state.open_session(&request.patient_id, request.locale)?;
    tracing::info!(session_id = %handle.session_id, patient_id = %handle.patient_id, "session opened");
    Ok((StatusCode::CREATED, Json(handle)).into_response())
}

async fn get_session(
    State(state): State<AppState>,
    Path(session_id): Path<String>,
) -> Result<Json<SessionHandle>, ApiError> {
    Ok(Json(state.session(&session_id)?.handle.clone()))
}

async fn close_session(State(state): State<AppState>, Path(session_id): Path<String>) -> Result<StatusCode, ApiError> {
    state.close_session(&session_id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PostMessage {
    text: String,
}

fn sse_event(event: &SessionEvent) -> Event {
    let data = serde_json::to_string(event).expect("events serialize");
    Event::default().event(event.kind.as_str()).id(event.seq.to_string()).data(data)
}

fn event_stream(rx: mpsc::UnboundedReceiver<SessionEvent>) -> impl Stream<Item = Result<Event, Infallible>> {
    futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|event| (Ok(sse_event(&event)), rx))
    })
}

/// Streams one chat turn as server-sent events. The stream always ends with
/// exactly one `assistant_done` or `error` event.
async fn post_message(
    State(state): State<AppState>,
    Path(session_id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let request: PostMessage = parse_json(&body)?;
    if request.text.trim().is_empty() {
        return Err(ApiError::new(ErrorCode::InvalidRequest, "message text is empty"));
    }
    let entry = state.session(&session_id)?;
    let guard = entry.begin()?;
    state.metrics().messages.fetch_add(1, Ordering::Relaxed);

    let (tx, rx) = mpsc::unbounded_channel();
    tokio::task::spawn_blocking(move || {
        let _guard = guard;
        let mut last_seq = None;
        let mut terminal = false;
        let mut sink = |event: &SessionEvent| {
            last_seq = Some(event.seq);
            terminal |= event.kind.is_terminal();
            entry.record(event);
            let _ = tx.send(event.clone());
        };
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| entry.session.ask(&request.text, &mut sink)));
        let events = last_seq.map_or(0, |s| s + 1);
        let failure = match outcome {
            Ok(Ok(_)) => None,
            Ok(Err(e)) => Some((e.code(), e.to_string())),
            Err(_) => Some(("internal", "the chat worker failed".to_string())),
        };
        if let (false, Some((code, message))) = (terminal, &failure) {
            let event = SessionEvent {
                seq: events,
                kind: EventKind::Error,
                payload: json!({"code": code, "message": message}).to_string(),
                timestamp: chrono::Utc::now(),
            };
            let _ = tx.send(event);
        }
        tracing::info!(
            session_id = %entry.handle.session_id,
            events,
            outcome = failure.as_ref().map_or("ok", |f| f.0),
            "message answered"
        );
    });
    Ok(Sse::new(event_stream(rx)).keep_alive(KeepAlive::default()).into_response())
}

async fn clear_context(
    State(state): State<AppState>,
    Path(session_id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let entry = state.session(&session_id)?;
    let _guard = entry.begin()?;
    let mut cleared = None;
    entry
        .session
        .clear(&mut |event| {
            entry.record(event);
            cleared = Some(event.seq);
        })
        .map_err(|e| ApiError::new(ErrorCode::SessionBusy, e.to_string()))?;
    Ok(Json(json!({"cleared": true, "seq": cleared})))
}

/// Replays logged events after the `Last-Event-ID` header (or the `after`
/// query parameter) and then closes the stream.
async fn replay_events(
    State(state): State<AppState>,
    Path(session_id): Path<String>,
    headers: HeaderMap,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let entry = state.session(&session_id)?;
    let after = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .or(query.get("after").map(String::as_str));
    let after = match after {
        None => None,
        Some(raw) => Some(
            raw.trim()
                .parse::<u64>()
                .map_err(|_| ApiError::new(ErrorCode::InvalidRequest, format!("invalid event id {raw:?}")))?,
        ),
    };
    let events = entry.events_after(after);
    let stream = futures::stream::iter(events.into_iter().map(|e| Ok::<_, Infallible>(sse_event(&e))));
    Ok(Sse::new(stream).into_response())
}
