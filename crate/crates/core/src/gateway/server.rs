//! HTTP API for the analyst review loop.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::{Mutex, RwLock};

use super::store::{CandidateQuery, FieldError, Store, StoreError};
use crate::register::RegisterForm;
use crate::relation::Judgment;

#[derive(Clone)]
pub struct AppState {
    store: Arc<RwLock<Store>>,
    retrain: Arc<Mutex<()>>,
    token: Option<Arc<str>>,
    default_page_size: usize,
}

impl AppState {
    /// `token`, when set, is required as a bearer token on every route but
    /// `/health`.
    pub fn new(store: Store, token: Option<String>, default_page_size: usize) -> AppState {
        AppState {
            store: Arc::new(RwLock::new(store)),
            retrain: Arc::new(Mutex::new(())),
            token: token.filter(|t| !t.is_empty()).map(Into::into),
            default_page_size,
        }
    }

    pub fn store(&self) -> Arc<RwLock<Store>> {
        self.store.clone()
    }
}

pub struct ApiError(StatusCode, serde_json::Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn bad_request(errors: Vec<FieldError>) -> ApiError {
    ApiError(
        StatusCode::BAD_REQUEST,
        json!({ "error": "invalid request", "errors": errors }),
    )
}

fn field(name: &str, message: &str) -> FieldError {
    FieldError {
        field: name.to_string(),
        message: message.to_string(),
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        let status = match &e {
            StoreError::Invalid(errors) => return bad_request(errors.clone()),
            StoreError::UnknownPair(_) | StoreError::UnknownEntity(_) | StoreError::UnknownPortfolio(_) => {
                StatusCode::NOT_FOUND
            }
            StoreError::NothingToRetrain | StoreError::NoModel | StoreError::StaleModel { .. } => StatusCode::CONFLICT,
            StoreError::Relation(crate::relation::RelationError::DegenerateLabels) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %e, "request failed");
        }
        ApiError(status, json!({ "error": e.to_string() }))
    }
}

type ApiResult = Result<Response, ApiError>;

pub fn router(state: AppState) -> Router {
    let protected = Router::new()
        .route("/candidates", get(candidates))
        .route("/judgments", post(judgments))
        .route("/models/retrain", post(retrain))
        .route("/registers/{entity_id}", get(register))
        .route("/registers/{entity_id}/plan", get(plan))
        .route("/portfolio/{portfolio_id}/overlap", get(overlap))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth));
    Router::new()
        .route("/health", get(health))
        .merge(protected)
        .with_state(state)
}

async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == &**token);
        if !ok {
            return ApiError(
                StatusCode::UNAUTHORIZED,
                json!({ "error": "missing or wrong bearer token" }),
            )
            .into_response();
        }
    }
    next.run(req).await
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    let s = state.store.read().await;
    Json(json!({
        "status": "ok",
        "model_version": s.model_version(),
        "mentions": s.mention_count(),
        "judgments": s.judgment_count(),
    }))
}

fn parse_usize(q: &HashMap<String, String>, key: &str, default: usize, errors: &mut Vec<FieldError>) -> usize {
    match q.get(key) {
        None => default,
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => {
                errors.push(field(key, "must be a positive integer"));
                default
            }
        },
    }
}

async fn candidates(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let mut errors = Vec::new();
    let status = match q.get("status").map(String::as_str) {
        None | Some("ALL") => None,
        Some("UNREVIEWED") => Some(Judgment::Unreviewed),
        Some("CORRECT") => Some(Judgment::Correct),
        Some("INCORRECT") => Some(Judgment::Incorrect),
        Some(_) => {
            errors.push(field("status", "must be UNREVIEWED, CORRECT, INCORRECT or ALL"));
            None
        }
    };
    let page = parse_usize(&q, "page", 1, &mut errors);
    let page_size = parse_usize(&q, "page_size", state.default_page_size, &mut errors);
    if !errors.is_empty() {
        return Err(bad_request(errors));
    }
    let query = CandidateQuery {
        status,
        entity: q.get("entity").cloned(),
        page,
        page_size,
        annotator: q.get("annotator").cloned(),
    };
    Ok(Json(state.store.read().await.candidates(&query)).into_response())
}

async fn judgments(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let value: serde_json::Value =
        serde_json::from_slice(&body).map_err(|e| bad_request(vec![field("body", &e.to_string())]))?;
    let record = state.store.write().await.record_judgment(&value)?;
    Ok(Json(record).into_response())
}

async fn retrain(State(state): State<AppState>) -> ApiResult {
    let _exclusive = state.retrain.lock().await;
    let job = state.store.read().await.retrain_job()?;
    let previous = job.base_version();
    let trained = tokio::task::spawn_blocking(move || job.run())
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": e.to_string() })))??;
    let version = state.store.write().await.install(trained)?;
    Ok(Json(json!({ "model_version": version, "previous_version": previous })).into_response())
}

async fn register(
    State(state): State<AppState>,
    Path(entity_id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let form = match q.get("view") {
        None => RegisterForm::Quantitative,
        Some(v) => v
            .parse()
            .map_err(|_| bad_request(vec![field("view", "must be qualitative or quantitative")]))?,
    };
    Ok(Json(state.store.read().await.register_view(&entity_id, form)?).into_response())
}

async fn plan(State(state): State<AppState>, Path(entity_id): Path<String>) -> ApiResult {
    Ok(Json(state.store.read().await.plan(&entity_id)?).into_response())
}

async fn overlap(State(state): State<AppState>, Path(portfolio_id): Path<String>) -> ApiResult {
    Ok(Json(state.store.read().await.overlap(&portfolio_id)?).into_response())
}

/// Serves until Ctrl-C, then compacts the judgment log.
pub async fn serve(state: AppState, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    state.store.write().await.write_snapshot()?;
    Ok(())
}
