//! HTTP routes under `/api/v1/`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap};
use axum::routing::{get, post};
use axum::{Json, Router};
use casegen_core::engine::{DiagnosisSubmission, NotebookOp};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::error::{ApiError, ApiResult};
use crate::library::CaseFilter;
use crate::service::{Principal, Service};
use crate::session::{OpResult, PlayOp, SessionConfig};

type Svc = State<Arc<Service>>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let body: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(body)
        .map_err(|e| ApiError::unprocessable("bad_request", format!("invalid request body: {e}")))
}

fn bearer(headers: &HeaderMap) -> ApiResult<&str> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or_else(ApiError::unauthorized)
}

fn player(svc: &Service, headers: &HeaderMap) -> ApiResult<(String, String)> {
    match svc.authenticate(bearer(headers)?)? {
        Principal::Player {
            session_id,
            player_id,
        } => Ok((session_id, player_id)),
        Principal::Teacher { .. } => Err(ApiError::forbidden("play endpoints need a player token")),
    }
}

async fn upload_case(State(svc): Svc, body: Bytes) -> ApiResult<Json<Value>> {
    let id = svc.upload_case(&body)?;
    Ok(Json(json!({ "id": id })))
}

async fn search_cases(State(svc): Svc, Query(filter): Query<CaseFilter>) -> Json<Value> {
    Json(json!(svc.search_cases(&filter)))
}

async fn create_session(State(svc): Svc, body: Bytes) -> ApiResult<Json<Value>> {
    let config: SessionConfig = parse(&body)?;
    Ok(Json(json!(svc.create_session(config)?)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JoinBody {
    join_code: String,
    display_name: String,
    #[serde(default)]
    group: Option<String>,
}

async fn join_session(
    State(svc): Svc,
    Path(session_id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let b: JoinBody = parse(&body)?;
    Ok(Json(json!(svc.join(
        &session_id,
        &b.join_code,
        &b.display_name,
        b.group
    )?)))
}

async fn scores(
    State(svc): Svc,
    Path(session_id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Json<Value>> {
    let principal = svc.authenticate(bearer(&headers)?)?;
    Ok(Json(json!(svc.scores(&session_id, &principal).await?)))
}

async fn state(State(svc): Svc, headers: HeaderMap) -> ApiResult<Json<Value>> {
    let (sid, pid) = player(&svc, &headers)?;
    let session = svc.session(&sid)?;
    let slot = session.player(&pid).ok_or_else(ApiError::unauthorized)?;
    let slot = slot.lock().await;
    Ok(Json(json!(session.state_view(&slot))))
}

/// Runs one state-changing request under the player's lock. The trace line
/// is synced before the response is built.
async fn run(svc: &Service, headers: &HeaderMap, op: PlayOp) -> ApiResult<Json<Value>> {
    let (sid, pid) = player(svc, headers)?;
    let session = svc.session(&sid)?;
    let slot = session.player(&pid).ok_or_else(ApiError::unauthorized)?;
    let mut slot = slot.lock().await;
    let result = session.execute(&mut slot, op, svc.now())?;
    let view = session.render(&slot);
    Ok(Json(match result {
        OpResult::Started => json!(session.state_view(&slot)),
        OpResult::Performed(outcome) => json!({ "outcome": outcome, "view": view }),
        OpResult::Answered(feedback) => json!({ "feedback": feedback, "view": view }),
        OpResult::Hint(hint) => json!({ "hint": hint, "view": view }),
        OpResult::Notebook => json!({ "view": view }),
        OpResult::Diagnosed(report) => json!({ "report": report, "view": view }),
        OpResult::Visibility(hide) => json!({ "hide_score": hide }),
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StartBody {
    #[serde(default)]
    case_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PerformBody {
    card_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerBody {
    card_id: String,
    choices: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NotebookBody {
    ops: Vec<NotebookOp>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnoseBody {
    submission: DiagnosisSubmission,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VisibilityBody {
    hide: bool,
}

async fn start(State(svc): Svc, headers: HeaderMap, body: Bytes) -> ApiResult<Json<Value>> {
    let b: StartBody = parse(&body)?;
    run(&svc, &headers, PlayOp::Start { case_id: b.case_id }).await
}

async fn perform(State(svc): Svc, headers: HeaderMap, body: Bytes) -> ApiResult<Json<Value>> {
    let b: PerformBody = parse(&body)?;
    run(&svc, &headers, PlayOp::Perform { card_id: b.card_id }).await
}

async fn answer(State(svc): Svc, headers: HeaderMap, body: Bytes) -> ApiResult<Json<Value>> {
    let b: AnswerBody = parse(&body)?;
    let op = PlayOp::Answer {
        card_id: b.card_id,
        choices: b.choices,
    };
    run(&svc, &headers, op).await
}

async fn hint(State(svc): Svc, headers: HeaderMap) -> ApiResult<Json<Value>> {
    run(&svc, &headers, PlayOp::Hint).await
}

async fn notebook(State(svc): Svc, headers: HeaderMap, body: Bytes) -> ApiResult<Json<Value>> {
    let b: NotebookBody = parse(&body)?;
    run(&svc, &headers, PlayOp::Notebook { ops: b.ops }).await
}

async fn diagnose(State(svc): Svc, headers: HeaderMap, body: Bytes) -> ApiResult<Json<Value>> {
    let b: DiagnoseBody = parse(&body)?;
    let op = PlayOp::Diagnose {
        submission: b.submission,
    };
    run(&svc, &headers, op).await
}

async fn score_visibility(
    State(svc): Svc,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let b: VisibilityBody = parse(&body)?;
    run(&svc, &headers, PlayOp::ScoreVisibility { hide: b.hide }).await
}

async fn api_not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

/// The full application. Static files from `ui_dir`, when given, are
/// served outside `/api/`.
pub fn router(service: Arc<Service>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/cases", post(upload_case).get(search_cases))
        .route("/sessions", post(create_session))
        .route("/sessions/:id/join", post(join_session))
        .route("/sessions/:id/scores", get(scores))
        .route("/play/state", get(state))
        .route("/play/start", post(start))
        .route("/play/perform", post(perform))
        .route("/play/answer", post(answer))
        .route("/play/hint", post(hint))
        .route("/play/notebook", post(notebook))
        .route("/play/diagnose", post(diagnose))
        .route("/play/score-visibility", post(score_visibility))
        .fallback(api_not_found)
        .layer(DefaultBodyLimit::max(64 * 1024 * 1024))
        .with_state(service);
    let app = Router::new().nest("/api/v1", api);
    match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(api_not_found),
    }
}
