//! HTTP+JSON front end for the experiment orchestrator.
//!
//! | method | path              | body / query                                  |
//! |--------|-------------------|-----------------------------------------------|
//! | POST   | `/experiments`    | an experiment plan                            |
//! | POST   | `/join`           | `{participant_id, plan_id?}`                  |
//! | GET    | `/observation`    | `?token=`                                     |
//! | POST   | `/guess`          | `{token, guess, turn?}`                       |
//! | POST   | `/advice`         | `{token, advice}`                             |
//! | GET    | `/progress`       | `?plan_id=` (omit for every plan)             |
//! | GET    | `/logs/{game_id}` | operator view, includes the hidden word       |
//!
//! Errors are `{"code": ..., "message": ...}` with a matching HTTP status.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use chainsearch::events::GameEvent;
use chainsearch::orchestrator::{GuessReply, Orchestrator, OrchestratorError, Progress, SessionView};
use chainsearch::plan::ExperimentPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub status: u16,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            code: code.to_string(),
            message: message.into(),
            status: status.as_u16(),
        }
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let code = e.code();
        let status = match code {
            "invalid_plan" | "game_error" | "human_rounds_in_simulation" => StatusCode::BAD_REQUEST,
            "unknown_plan" | "unknown_game" => StatusCode::NOT_FOUND,
            "unknown_session" => StatusCode::UNAUTHORIZED,
            "plan_exhausted" => StatusCode::GONE,
            "empty_guess" | "invalid_advice" => StatusCode::UNPROCESSABLE_ENTITY,
            "agent_error" => StatusCode::BAD_GATEWAY,
            "storage_error" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::CONFLICT,
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreatedExperiment {
    pub plan_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JoinRequest {
    pub participant_id: String,
    #[serde(default)]
    pub plan_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenQuery {
    pub token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuessRequest {
    pub token: String,
    pub guess: String,
    /// The turn the client believes it is submitting; guards against retries.
    #[serde(default)]
    pub turn: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdviceRequest {
    pub token: String,
    pub advice: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdviceAck {
    pub stored: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgressQuery {
    #[serde(default)]
    pub plan_id: Option<String>,
}

type Shared = Arc<Orchestrator>;

/// Runs orchestrator work off the async executor; machine rounds and LLM
/// calls block.
async fn blocking<T, F>(orch: Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Orchestrator) -> Result<T, OrchestratorError> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&orch)).await {
        Ok(r) => r.map(Json).map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

async fn create_experiment(
    State(orch): State<Shared>,
    body: Result<Json<ExperimentPlan>, JsonRejection>,
) -> Result<(StatusCode, Json<CreatedExperiment>), ApiError> {
    let Json(plan) = body?;
    let Json(plan_id) = blocking(orch, move |o| o.create_experiment(plan)).await?;
    Ok((StatusCode::CREATED, Json(CreatedExperiment { plan_id })))
}

async fn join(
    State(orch): State<Shared>,
    body: Result<Json<JoinRequest>, JsonRejection>,
) -> ApiResult<SessionView> {
    let Json(req) = body?;
    blocking(orch, move |o| o.join(&req.participant_id, req.plan_id.as_deref())).await
}

async fn observation(
    State(orch): State<Shared>,
    q: Result<Query<TokenQuery>, QueryRejection>,
) -> ApiResult<SessionView> {
    let Query(q) = q?;
    blocking(orch, move |o| o.observation(&q.token)).await
}

async fn guess(
    State(orch): State<Shared>,
    body: Result<Json<GuessRequest>, JsonRejection>,
) -> ApiResult<GuessReply> {
    let Json(req) = body?;
    blocking(orch, move |o| o.post_guess(&req.token, &req.guess, req.turn)).await
}

async fn advice(
    State(orch): State<Shared>,
    body: Result<Json<AdviceRequest>, JsonRejection>,
) -> ApiResult<AdviceAck> {
    let Json(req) = body?;
    blocking(orch, move |o| {
        o.post_advice(&req.token, &req.advice).map(|stored| AdviceAck { stored })
    })
    .await
}

async fn progress(
    State(orch): State<Shared>,
    q: Result<Query<ProgressQuery>, QueryRejection>,
) -> ApiResult<Vec<Progress>> {
    let Query(q) = q?;
    blocking(orch, move |o| match q.plan_id {
        Some(id) => Ok(vec![o.progress(&id)?]),
        None => o.plan_ids().iter().map(|id| o.progress(id)).collect(),
    })
    .await
}

async fn logs(State(orch): State<Shared>, Path(game_id): Path<String>) -> ApiResult<Vec<GameEvent>> {
    blocking(orch, move |o| o.logs(&game_id)).await
}

pub fn router(orch: Arc<Orchestrator>) -> Router {
    Router::new()
        .route("/experiments", post(create_experiment))
        .route("/join", post(join))
        .route("/observation", get(observation))
        .route("/guess", post(guess))
        .route("/advice", post(advice))
        .route("/progress", get(progress))
        .route("/logs/{game_id}", get(logs))
        .with_state(orch)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, orch: Arc<Orchestrator>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(orch))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
