//! HTTP binding under `/api`. Errors are always `{"error": code, "message": ...}`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tutor_core::{aggregate_metrics, Familiarity, LearnerProfile, LearnerRole, SessionState};

use crate::app::{AppError, ErrorCode, Tutor};
use crate::store::write_jsonl;

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Unprocessable => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::GatewayError => StatusCode::BAD_GATEWAY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'static str,
    message: &'a str,
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.as_str(),
            message: &self.message,
        };
        (self.code.status(), Json(body)).into_response()
    }
}

fn bad_json(rejection: JsonRejection) -> AppError {
    AppError::new(ErrorCode::BadRequest, rejection.body_text())
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, AppError> {
    payload.map(|Json(v)| v).map_err(bad_json)
}

/// Run blocking tutor work off the async executor.
async fn blocking<T, F>(tutor: &Arc<Tutor>, f: F) -> Result<T, AppError>
where
    T: Send + 'static,
    F: FnOnce(&Tutor) -> Result<T, AppError> + Send + 'static,
{
    let tutor = Arc::clone(tutor);
    tokio::task::spawn_blocking(move || f(&tutor))
        .await
        .map_err(|e| AppError::new(ErrorCode::Internal, format!("worker failed: {e}")))?
}

pub fn router(tutor: Arc<Tutor>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/plan", get(get_plan))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/sessions/{id}/feedback", post(post_feedback))
        .route("/api/sessions/{id}/events", get(session_events))
        .route("/api/admin/ingest", post(ingest))
        .route("/api/admin/feedback", get(export_feedback))
        .route("/api/admin/events", get(export_events))
        .route("/api/admin/metrics", get(metrics))
        .fallback(|| async { AppError::new(ErrorCode::NotFound, "no such endpoint") })
        .method_not_allowed_fallback(|| async {
            let mut r = AppError::new(ErrorCode::BadRequest, "method not allowed").into_response();
            *r.status_mut() = StatusCode::METHOD_NOT_ALLOWED;
            r
        })
        .with_state(tutor)
}

fn parse_enum<T: Copy + std::fmt::Debug>(field: &str, value: &str, all: &[T]) -> Result<T, AppError> {
    all.iter()
        .copied()
        .find(|v| format!("{v:?}").eq_ignore_ascii_case(value.trim()))
        .ok_or_else(|| {
            let names: Vec<String> = all.iter().map(|v| format!("{v:?}")).collect();
            AppError::new(
                ErrorCode::BadRequest,
                format!("{field}: unknown value {value:?}, expected one of {}", names.join(", ")),
            )
        })
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    index_docs: usize,
    index_chunks: usize,
    dropped_events: u64,
}

async fn health(State(t): State<Arc<Tutor>>) -> Json<Health> {
    let index = t.index();
    Json(Health {
        status: "ok",
        index_docs: index.doc_count(),
        index_chunks: index.len(),
        dropped_events: t.journal().dropped(),
    })
}

#[derive(Deserialize)]
struct CreateSession {
    learner_id: String,
    role: String,
    familiarity: String,
}

#[derive(Serialize)]
struct Created {
    session_id: String,
}

async fn create_session(
    State(t): State<Arc<Tutor>>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), AppError> {
    let req = body(payload)?;
    let learner = LearnerProfile {
        learner_id: req.learner_id,
        role: parse_enum("role", &req.role, &LearnerRole::ALL)?,
        self_reported_familiarity: parse_enum("familiarity", &req.familiarity, &Familiarity::ALL)?,
    };
    let state = blocking(&t, move |t| t.create_session(learner)).await?;
    Ok((StatusCode::CREATED, Json(Created {
        session_id: state.session_id,
    })))
}

#[derive(Serialize)]
struct SessionView {
    #[serde(flatten)]
    session: SessionState,
    phase_label: &'static str,
    version: u64,
}

async fn get_session(State(t): State<Arc<Tutor>>, Path(id): Path<String>) -> Result<Json<SessionView>, AppError> {
    let (session, version) = blocking(&t, move |t| t.session(&id)).await?;
    Ok(Json(SessionView {
        phase_label: session.scaffold.phase_label(),
        session,
        version,
    }))
}

async fn get_plan(State(t): State<Arc<Tutor>>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, AppError> {
    let (session, _) = blocking(&t, move |t| t.session(&id)).await?;
    Ok(Json(serde_json::json!({ "plan": session.plan })))
}

#[derive(Deserialize)]
struct MessageQuery {
    #[serde(default)]
    stream: bool,
}

#[derive(Deserialize)]
struct PostMessage {
    text: String,
}

async fn post_message(
    State(t): State<Arc<Tutor>>,
    Path(id): Path<String>,
    query: Result<Query<MessageQuery>, QueryRejection>,
    payload: Result<Json<PostMessage>, JsonRejection>,
) -> Result<Response, AppError> {
    let Query(q) = query.map_err(|e| AppError::new(ErrorCode::BadRequest, e.body_text()))?;
    if q.stream {
        return Err(AppError::new(
            ErrorCode::BadRequest,
            "stream=true is reserved; responses are not streamed yet",
        ));
    }
    let text = body(payload)?.text;
    let response = blocking(&t, move |t| t.post_message(&id, &text)).await?;
    Ok(Json(response).into_response())
}

#[derive(Deserialize)]
struct PostFeedback {
    ratings: BTreeMap<String, i64>,
    #[serde(default)]
    free_text: Option<String>,
    #[serde(default)]
    turn_index: Option<u64>,
}

async fn post_feedback(
    State(t): State<Arc<Tutor>>,
    Path(id): Path<String>,
    payload: Result<Json<PostFeedback>, JsonRejection>,
) -> Result<StatusCode, AppError> {
    let req = body(payload)?;
    blocking(&t, move |t| t.submit_feedback(&id, &req.ratings, req.free_text, req.turn_index)).await?;
    Ok(StatusCode::NO_CONTENT)
}

fn ndjson(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], bytes).into_response()
}

async fn session_events(State(t): State<Arc<Tutor>>, Path(id): Path<String>) -> Result<Response, AppError> {
    let bytes = blocking(&t, move |t| {
        t.session(&id)?;
        let events = t
            .journal()
            .scan_session(&id)
            .map_err(|e| AppError::new(ErrorCode::Internal, e.to_string()))?;
        let mut out = Vec::new();
        write_jsonl(&mut out, &events).map_err(|e| AppError::new(ErrorCode::Internal, e.to_string()))?;
        Ok(out)
    })
    .await?;
    Ok(ndjson(bytes))
}

#[derive(Deserialize)]
struct Ingest {
    path: PathBuf,
}

async fn ingest(
    State(t): State<Arc<Tutor>>,
    payload: Result<Json<Ingest>, JsonRejection>,
) -> Result<Json<crate::app::IngestSummary>, AppError> {
    let req = body(payload)?;
    Ok(Json(blocking(&t, move |t| t.ingest(&req.path)).await?))
}

async fn export_feedback(State(t): State<Arc<Tutor>>) -> Result<Response, AppError> {
    let bytes = blocking(&t, |t| {
        let records = t
            .feedback_log()
            .records()
            .map_err(|e| AppError::new(ErrorCode::Internal, e.to_string()))?;
        let mut out = Vec::new();
        write_jsonl(&mut out, &records).map_err(|e| AppError::new(ErrorCode::Internal, e.to_string()))?;
        Ok(out)
    })
    .await?;
    Ok(ndjson(bytes))
}

async fn export_events(State(t): State<Arc<Tutor>>) -> Result<Response, AppError> {
    let bytes = blocking(&t, |t| {
        let mut out = Vec::new();
        t.journal()
            .export(&mut out)
            .map_err(|e| AppError::new(ErrorCode::Internal, e.to_string()))?;
        Ok(out)
    })
    .await?;
    Ok(ndjson(bytes))
}

async fn metrics(State(t): State<Arc<Tutor>>) -> Result<Json<Vec<tutor_core::MetricSummary>>, AppError> {
    let records = blocking(&t, |t| {
        t.feedback_log()
            .records()
            .map_err(|e| AppError::new(ErrorCode::Internal, e.to_string()))
    })
    .await?;
    Ok(Json(aggregate_metrics(&records)))
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    tutor: Arc<Tutor>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(tutor)).with_graceful_shutdown(shutdown).await
}
