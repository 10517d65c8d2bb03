//! HTTP API for interactive identification sessions.
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | POST | `/api/session` | session config → `{id}` |
//! | GET | `/api/session/{id}` | `{id, phase, mode, cursor, trial_count}` |
//! | GET | `/api/session/{id}/demo` | every letter with its label and samples |
//! | GET | `/api/session/{id}/trial` | `{index, height_mm, duration_ms, samples}` |
//! | POST | `/api/session/{id}/response` | `{letter}` → acknowledgment or feedback |
//! | GET | `/api/session/{id}/report` | `{matrix, accuracy, records}` |
//! | GET | `/api/font` | the stroke font file |
//!
//! Errors are `{"error": "<code>"}` with a 4xx/5xx status; config errors add
//! `field` and `message`.

mod store;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use glyphmotion::experiment::{
    confusion_matrix, ExperimentError, Mode, ParticipantKind, SessionConfig,
};
use glyphmotion::font::samples_to_json;
use glyphmotion::{serialize_font, Letter};
use serde::Deserialize;
use serde_json::{json, Value};

pub use store::{Pending, SessionEntry, SessionStore};

#[derive(Debug, Clone, PartialEq)]
pub enum ApiError {
    InvalidConfig { field: String, message: String },
    BadRequest(String),
    UnknownSession,
    SessionFinished,
    ResponsePending,
    NoPendingTrial,
    InvalidLetter,
    SessionUnfinished,
    IncompleteRecords,
    Storage(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::InvalidConfig { .. } => "invalid-config",
            ApiError::BadRequest(_) => "bad-request",
            ApiError::UnknownSession => "unknown-session",
            ApiError::SessionFinished => "session-finished",
            ApiError::ResponsePending => "response-pending",
            ApiError::NoPendingTrial => "no-pending-trial",
            ApiError::InvalidLetter => "invalid-letter",
            ApiError::SessionUnfinished => "session-unfinished",
            ApiError::IncompleteRecords => "incomplete-records",
            ApiError::Storage(_) => "storage",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::InvalidConfig { .. } | ApiError::BadRequest(_) | ApiError::InvalidLetter => {
                StatusCode::BAD_REQUEST
            }
            ApiError::UnknownSession => StatusCode::NOT_FOUND,
            ApiError::SessionFinished
            | ApiError::ResponsePending
            | ApiError::NoPendingTrial
            | ApiError::SessionUnfinished
            | ApiError::IncompleteRecords => StatusCode::CONFLICT,
            ApiError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn storage(e: std::io::Error) -> ApiError {
        ApiError::Storage(e.to_string())
    }

    fn from_experiment(e: ExperimentError) -> ApiError {
        match e {
            ExperimentError::InvalidConfig { field, message } => {
                ApiError::InvalidConfig { field, message }
            }
            ExperimentError::SessionFinished => ApiError::SessionFinished,
            ExperimentError::IncompleteRecords => ApiError::IncompleteRecords,
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ApiError::InvalidConfig { field, message } => {
                write!(f, "invalid-config: {field}: {message}")
            }
            ApiError::BadRequest(m) | ApiError::Storage(m) => write!(f, "{}: {m}", self.code()),
            _ => f.write_str(self.code()),
        }
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match &self {
            ApiError::InvalidConfig { field, message } => {
                json!({"error": self.code(), "field": field, "message": message})
            }
            ApiError::BadRequest(m) | ApiError::Storage(m) => {
                json!({"error": self.code(), "message": m})
            }
            _ => json!({"error": self.code()}),
        };
        (self.status(), axum::Json(body)).into_response()
    }
}

type AppState = Arc<SessionStore>;

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/api/font", get(font))
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", get(status))
        .route("/api/session/{id}/demo", get(demo))
        .route("/api/session/{id}/trial", get(next_trial))
        .route("/api/session/{id}/response", post(submit_response))
        .route("/api/session/{id}/report", get(report))
        .with_state(store)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, store: Arc<SessionStore>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn font(State(store): State<AppState>) -> Response {
    json_response(
        StatusCode::OK,
        String::from_utf8(serialize_font(store.font())).expect("utf-8 font"),
    )
}

/// Parses a session config; `participant` defaults to interactive here.
pub fn parse_create_body(body: &[u8]) -> Result<SessionConfig, ApiError> {
    let mut value: Value = if body.iter().all(u8::is_ascii_whitespace) {
        json!({})
    } else {
        serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))?
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| ApiError::BadRequest("config must be a JSON object".into()))?;
    obj.entry("participant")
        .or_insert_with(|| json!({"kind": "interactive"}));
    let cfg: SessionConfig = serde_json::from_value(value).map_err(|e| {
        let message = e.to_string();
        let field = ["target_mean_height", "target_duration", "repeats_per_letter", "mode", "seed"]
            .into_iter()
            .find(|f| message.contains(f))
            .unwrap_or("config");
        ApiError::InvalidConfig {
            field: field.to_string(),
            message,
        }
    })?;
    if cfg.participant != ParticipantKind::Interactive {
        return Err(ApiError::InvalidConfig {
            field: "participant".into(),
            message: "the service only hosts interactive sessions".into(),
        });
    }
    cfg.validate().map_err(ApiError::from_experiment)?;
    Ok(cfg)
}

async fn create_session(State(store): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let cfg = parse_create_body(&body)?;
    let id = store.create(cfg)?;
    Ok((StatusCode::CREATED, axum::Json(json!({ "id": id }))).into_response())
}

fn phase(entry: &SessionEntry) -> &'static str {
    if entry.session.is_finished() {
        "finished"
    } else if entry.session.cursor() == 0 && entry.pending.is_none() {
        "demo"
    } else {
        "running"
    }
}

async fn status(State(store): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let entry = store.get(&id)?;
    let e = entry.lock().expect("session lock");
    Ok(axum::Json(json!({
        "id": id,
        "phase": phase(&e),
        "mode": e.session.config().mode.as_str(),
        "cursor": e.session.cursor(),
        "trial_count": e.session.trial_count(),
    }))
    .into_response())
}

fn number(v: f64) -> String {
    serde_json::to_string(&v).expect("finite")
}

/// Demonstration pass: every letter once, labelled. Produces no records.
async fn demo(State(store): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let entry = store.get(&id)?;
    let prepared = entry.lock().expect("session lock").prepared.clone();
    let mut out = String::from("{\"letters\":[");
    for (i, g) in prepared.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!(
            "{{\"letter\":\"{}\",\"samples\":{}}}",
            g.letter,
            samples_to_json(&g.samples)
        ));
    }
    out.push_str("]}");
    Ok(json_response(StatusCode::OK, out))
}

async fn next_trial(State(store): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let entry = store.get(&id)?;
    let mut e = entry.lock().expect("session lock");
    if e.pending.is_some() {
        return Err(ApiError::ResponsePending);
    }
    let trial = e.session.next_trial().ok_or(ApiError::SessionFinished)?;
    e.pending = Some(Pending {
        index: trial.index,
        letter: trial.letter,
        fetched: Instant::now(),
    });
    let cond = e.session.config().condition;
    let glyph = e.prepared.glyph(trial.letter);
    let body = format!(
        "{{\"index\":{},\"height_mm\":{},\"duration_ms\":{},\"samples\":{}}}",
        trial.index,
        number(cond.target_mean_height),
        number(cond.target_duration),
        samples_to_json(&glyph.samples)
    );
    Ok(json_response(StatusCode::OK, body))
}

#[derive(Deserialize)]
struct ResponseBody {
    letter: Value,
}

async fn submit_response(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let entry = store.get(&id)?;
    let parsed: ResponseBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let letter = parsed
        .letter
        .as_str()
        .and_then(Letter::parse)
        .ok_or(ApiError::InvalidLetter)?;
    let mut e = entry.lock().expect("session lock");
    let record = e.answer(letter)?;
    let body = match record.mode {
        Mode::Training => json!({
            "index": record.index,
            "correct": record.correct,
            "displayed": record.displayed,
        }),
        Mode::Test => json!({ "index": record.index, "accepted": true }),
    };
    Ok(axum::Json(body).into_response())
}

async fn report(State(store): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let entry = store.get(&id)?;
    let e = entry.lock().expect("session lock");
    if e.session.config().mode == Mode::Test && !e.session.is_finished() {
        return Err(ApiError::SessionUnfinished);
    }
    let records = e.session.records();
    let matrix = confusion_matrix(records).map_err(ApiError::from_experiment)?;
    let records_json: Vec<Value> = records
        .iter()
        .map(|r| serde_json::from_str(&r.to_log_line()).expect("log line"))
        .collect();
    Ok(axum::Json(json!({
        "matrix": matrix.to_csv(),
        "accuracy": matrix.accuracy().ok(),
        "records": records_json,
    }))
    .into_response())
}
