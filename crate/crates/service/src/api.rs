//! HTTP handlers under `/api/v1`.

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sea_core::config::{profile, FieldProblem, RunConfig, DATASET_PROFILES};
use sea_core::encoder::ModelKind;
use sea_core::kg::EntityId;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::state::{dataset_problems, AppState, LaunchError, Run, RunState};
use crate::views::{self, Direction, PairSet, SortOrder};

/// Version of the static `/meta` payloads.
pub const META_VERSION: u32 = 1;
pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 1000;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    fields: Vec<FieldProblem>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.message, "fields": self.fields });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let origins = &state.options().allowed_origins;
    let allow = if origins.is_empty() {
        AllowOrigin::from(Any)
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    let cors = CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);

    let api = Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/meta/models", get(models))
        .route("/meta/defaults", get(defaults))
        .route("/runs", get(list_runs).post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/cancel", post(cancel_run))
        .route("/runs/{id}/progress", get(progress))
        .route("/runs/{id}/report", get(report))
        .route("/runs/{id}/results", get(results))
        .route("/runs/{id}/entities/{eid}", get(entity))
        .route("/runs/{id}/projection", get(projection))
        .with_state(state);
    Router::new().nest("/api/v1", api).layer(cors)
}

const SHARED_PARAMETERS: [&str; 12] = [
    "layers",
    "dim",
    "loss",
    "margin",
    "hsm_lambda",
    "hsm_tau",
    "learning_rate",
    "epochs",
    "batch_size",
    "negative_count",
    "fanouts",
    "rng_seed",
];

fn model_entry(m: ModelKind) -> serde_json::Value {
    let (description, specific): (&str, &[&str]) = match m {
        ModelKind::GcnAlignLite => (
            "Graph convolution over the symmetric-normalized adjacency",
            &["activation"],
        ),
        ModelKind::AttentionLite => (
            "Attention-weighted aggregation with one scoring vector per layer",
            &["activation", "leaky_slope"],
        ),
    };
    json!({ "name": m.name(), "description": description, "model_parameters": specific })
}

async fn models() -> Json<serde_json::Value> {
    Json(json!({
        "version": META_VERSION,
        "models": ModelKind::ALL.map(model_entry),
        "shared_parameters": SHARED_PARAMETERS,
        "datasets": DATASET_PROFILES,
    }))
}

#[derive(Debug, Deserialize)]
struct DefaultsQuery {
    model: Option<String>,
    dataset: Option<String>,
}

async fn defaults(query: Result<Query<DefaultsQuery>, QueryRejection>) -> ApiResult<Json<serde_json::Value>> {
    let Query(q) = query?;
    let model_name = q.model.as_deref().unwrap_or(ModelKind::GcnAlignLite.name());
    let model = ModelKind::from_name(model_name).ok_or_else(|| ApiError::not_found(format!("model `{model_name}`")))?;
    let dataset = q.dataset.as_deref().unwrap_or("synthetic");
    let config = profile(model, dataset).ok_or_else(|| ApiError::not_found(format!("dataset profile `{dataset}`")))?;
    Ok(Json(json!({
        "version": META_VERSION,
        "model": model.name(),
        "dataset": dataset,
        "config": config,
    })))
}

fn find(state: &AppState, id: &str) -> ApiResult<std::sync::Arc<Run>> {
    state.run(id).ok_or_else(|| ApiError::not_found(format!("run `{id}`")))
}

async fn list_runs(State(state): State<AppState>) -> Json<serde_json::Value> {
    let runs: Vec<_> = state.runs().iter().map(|r| r.handle()).collect();
    Json(json!({ "runs": runs }))
}

async fn create_run(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let config: RunConfig = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid run config: {e}")))?;
    let mut problems = config.problems();
    problems.extend(dataset_problems(&config));
    if !problems.is_empty() {
        let names: Vec<&str> = problems.iter().map(|p| p.field.as_str()).collect();
        return Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            message: format!("invalid fields: {}", names.join(", ")),
            fields: problems,
        });
    }
    let run = state.launch(config).map_err(|LaunchError::Busy(active)| {
        ApiError::new(StatusCode::CONFLICT, format!("run `{active}` is still in progress"))
    })?;
    let handle = run.handle();
    tracing::info!(run = %handle.id, "run launched");
    let location = format!("/api/v1/runs/{}", handle.id);
    Ok((StatusCode::CREATED, [(header::LOCATION, location)], Json(handle)).into_response())
}

async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(find(&state, &id)?.handle()).into_response())
}

async fn cancel_run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let run = find(&state, &id)?;
    run.cancel();
    Ok((StatusCode::ACCEPTED, Json(run.handle())).into_response())
}

async fn progress(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (run, series) = find(&state, &id)?.snapshot();
    Ok(Json(json!({ "run": run, "series": series })).into_response())
}

/// Results of a finished run, or 409 naming its state.
fn completed(state: &AppState, id: &str) -> ApiResult<(std::sync::Arc<Run>, std::sync::Arc<crate::state::RunResults>)> {
    let run = find(state, id)?;
    let results = run.results().cloned().ok_or_else(|| {
        let st = run.state();
        let what = if st == RunState::Failed { "failed" } else { "not finished" };
        ApiError::new(StatusCode::CONFLICT, format!("run `{id}` has {what} (state {st:?})").to_lowercase())
    })?;
    Ok((run, results))
}

async fn report(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (_, results) = completed(&state, &id)?;
    Ok(Json(results.report.clone()).into_response())
}

#[derive(Debug, Deserialize)]
struct ResultsQuery {
    #[serde(default)]
    direction: Direction,
    #[serde(default)]
    sort: SortOrder,
    normalized: Option<bool>,
    #[serde(default)]
    offset: usize,
    limit: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ResultsPage {
    run: String,
    direction: Direction,
    sort: SortOrder,
    normalized: bool,
    offset: usize,
    limit: usize,
    total: usize,
    metrics: sea_core::run::MetricSummary,
    items: Vec<views::CandidateList>,
}

async fn results(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<ResultsQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = query?;
    let (run, results) = completed(&state, &id)?;
    let normalized = q.normalized.unwrap_or(true);
    let limit = q.limit.unwrap_or(DEFAULT_PAGE).min(MAX_PAGE);
    let (total, items) = views::result_page(&results, q.direction, normalized, q.sort, q.offset, limit);
    let metrics = results.direction(q.direction).eval(normalized).into();
    Ok(Json(ResultsPage {
        run: run.id.clone(),
        direction: q.direction,
        sort: q.sort,
        normalized,
        offset: q.offset,
        limit,
        total,
        metrics,
        items,
    })
    .into_response())
}

#[derive(Debug, Deserialize)]
struct EntityQuery {
    #[serde(default)]
    direction: Direction,
    normalized: Option<bool>,
}

async fn entity(
    State(state): State<AppState>,
    Path((id, eid)): Path<(String, String)>,
    query: Result<Query<EntityQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = query?;
    let (run, results) = completed(&state, &id)?;
    let task = results.oriented(q.direction);
    let eid: EntityId = eid
        .parse()
        .ok()
        .filter(|&e| e < task.source_count())
        .ok_or_else(|| ApiError::not_found(format!("entity `{eid}`")))?;
    let normalized = q.normalized.unwrap_or(true);
    let truth = views::truth_map(task).get(&eid).copied();
    let seed = run.config.encoder.rng_seed;
    Ok(Json(json!({
        "run": run.id,
        "direction": q.direction,
        "normalized": normalized,
        "entity": views::candidate_list(&results, q.direction, normalized, eid, truth),
        "graph": views::ego_graph(&task.source, eid, seed),
        "truth_graph": truth.map(|t| views::ego_graph(&task.target, t, seed)),
    }))
    .into_response())
}

#[derive(Debug, Deserialize)]
struct ProjectionQuery {
    #[serde(default)]
    set: PairSet,
    sample: Option<usize>,
}

async fn projection(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<ProjectionQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = query?;
    let (run, results) = completed(&state, &id)?;
    let points = views::projection(&results, q.set, q.sample, run.config.encoder.rng_seed);
    Ok(Json(json!({ "run": run.id, "set": q.set, "points": points })).into_response())
}
