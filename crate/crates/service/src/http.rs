//! HTTP/JSON surface.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/healthz` | |
//! | GET | `/trials` | |
//! | POST | `/trials` | [`CreateTrial`] |
//! | GET | `/trials/{id}` | |
//! | POST | `/trials/{id}/enrollments` | |
//! | POST | `/trials/{id}/patients/{k}/outcome` | `{"outcome": {"binary": true}}` |
//! | GET | `/trials/{id}/events?since=seq` | |
//! | POST | `/trials/{id}/preview` | `{"outcomes": [{"patient": k, "outcome": ...}]}` |
//!
//! Mutating requests accept an `Idempotency-Key` header. When a token is
//! configured every route but `/healthz` requires `Authorization: Bearer`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use erade_core::Outcome;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::error::ServiceError;
use crate::record::{CreateTrial, HypotheticalOutcome};
use crate::registry::TrialService;
use crate::schema;

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

#[derive(Clone)]
struct AppState {
    service: Arc<TrialService>,
    token: Option<Arc<str>>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = json!({
            "schema": schema::ERROR,
            "error": self.code(),
            "message": self.to_string(),
        });
        (status, Json(body)).into_response()
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("request body: {e}")))
}

fn idempotency_key(headers: &HeaderMap) -> Option<String> {
    headers
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
}

/// Runs a blocking service call (journal writes sync to disk) off the
/// async workers.
async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&TrialService) -> Result<T, ServiceError> + Send + 'static,
{
    let service = state.service.clone();
    tokio::task::spawn_blocking(move || f(&service))
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e)))?
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_trials(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "trials": state.service.trial_ids() }))
}

async fn create_trial(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Response, ServiceError> {
    let request: CreateTrial = parse_body(&body)?;
    let key = idempotency_key(&headers);
    let (snapshot, created) = blocking(&state, move |s| s.create(&request, key)).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(snapshot)).into_response())
}

async fn get_trial(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(state.service.snapshot(&id)?).into_response())
}

async fn enroll(State(state): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> Result<Response, ServiceError> {
    let key = idempotency_key(&headers);
    let response = blocking(&state, move |s| s.enroll(&id, key)).await?;
    let status = if response.repeated { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(response)).into_response())
}

#[derive(Deserialize)]
struct OutcomeBody {
    outcome: Outcome,
}

async fn record_outcome(
    State(state): State<AppState>,
    Path((id, patient)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let patient: usize = patient
        .parse()
        .map_err(|_| ServiceError::BadRequest(format!("patient index {patient:?} is not a positive integer")))?;
    let OutcomeBody { outcome } = parse_body(&body)?;
    let key = idempotency_key(&headers);
    let snapshot = blocking(&state, move |s| s.record_outcome(&id, patient, outcome, key)).await?;
    Ok(Json(snapshot).into_response())
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
}

async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Result<Response, ServiceError> {
    let events = state.service.events(&id, q.since)?;
    Ok(Json(json!({ "schema": schema::EVENTS, "trial_id": id, "events": events })).into_response())
}

#[derive(Deserialize)]
struct PreviewBody {
    #[serde(default)]
    outcomes: Vec<HypotheticalOutcome>,
}

async fn preview(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ServiceError> {
    let PreviewBody { outcomes } = if body.is_empty() {
        PreviewBody { outcomes: Vec::new() }
    } else {
        parse_body(&body)?
    };
    Ok(Json(state.service.preview(&id, &outcomes)?).into_response())
}

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == &**token);
        if !ok {
            return ServiceError::Unauthorized.into_response();
        }
    }
    next.run(request).await
}

/// Router over `service`; `token` enables bearer authentication.
pub fn router(service: Arc<TrialService>, token: Option<String>) -> Router {
    let state = AppState {
        service,
        token: token.map(Arc::from),
    };
    let protected = Router::new()
        .route("/trials", get(list_trials).post(create_trial))
        .route("/trials/{id}", get(get_trial))
        .route("/trials/{id}/enrollments", post(enroll))
        .route("/trials/{id}/patients/{k}/outcome", post(record_outcome))
        .route("/trials/{id}/events", get(events))
        .route("/trials/{id}/preview", post(preview))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/healthz", get(healthz))
        .merge(protected)
        .with_state(state)
}

#[derive(Clone, Debug)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    pub journal_dir: PathBuf,
    pub token: Option<String>,
}

/// Replays the journal directory and serves until Ctrl-C.
pub async fn serve(options: ServeOptions) -> Result<(), ServiceError> {
    let service = Arc::new(TrialService::open(&options.journal_dir)?);
    let app = router(service, options.token);
    let listener = tokio::net::TcpListener::bind(options.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
