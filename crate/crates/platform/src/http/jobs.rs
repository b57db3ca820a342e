// SPDX-License-Identifier: Apache-2.0

//! Platform API (apps, jobs) and the App Interface.

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use pathharbor_core::model::Mode;
use pathharbor_core::Id;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{blocking, parse_id, parse_json, ApiResult, Bearer, Shared};
use crate::error::ApiError;
use crate::executor::ExecutorSpec;
use crate::orchestrator::{AppRecord, Job, JobView};

pub(super) fn routes() -> Router<Shared> {
    Router::new()
        .route("/v1/apps", get(list_apps).post(register_app))
        .route("/v1/jobs", get(list_jobs).post(create_job))
        .route("/v1/jobs/{id}", get(get_job))
        .route("/v1/jobs/{id}/inputs/{key}", put(bind_input))
        .route("/v1/jobs/{id}/run", put(run_job))
        .route("/app/v1/{id}/inputs/{key}", get(app_input))
        .route("/app/v1/{id}/outputs/{key}", post(app_output))
        .route("/app/v1/{id}/finalize", put(app_finalize))
        .route("/app/v1/{id}/failure", put(app_failure))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterRequest {
    ead: Value,
    executor: ExecutorSpec,
}

async fn register_app(State(p): State<Shared>, body: Bytes) -> ApiResult<(StatusCode, Json<AppRecord>)> {
    let req: RegisterRequest = parse_json(&body)?;
    let text = serde_json::to_string(&req.ead).map_err(ApiError::internal)?;
    let app = p.orchestrator.register_app(&text, req.executor)?;
    Ok((StatusCode::CREATED, Json(app)))
}

async fn list_apps(State(p): State<Shared>) -> Json<Vec<AppRecord>> {
    Json(p.orchestrator.apps())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateJob {
    app_id: Id,
    mode: Mode,
}

async fn create_job(State(p): State<Shared>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateJob = parse_json(&body)?;
    let (job, token) = p.orchestrator.create_job(req.app_id, req.mode)?;
    Ok((StatusCode::CREATED, Json(json!({ "job": job, "token": token }))))
}

async fn list_jobs(State(p): State<Shared>) -> Json<Vec<Job>> {
    Json(p.orchestrator.jobs())
}

async fn get_job(State(p): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<JobView>> {
    let id = parse_id(&id, "job")?;
    p.orchestrator.job_view(id).map(Json).ok_or_else(|| ApiError::not_found(format!("job {id}")))
}

async fn bind_input(
    State(p): State<Shared>,
    Path((id, key)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<Job>> {
    let id = parse_id(&id, "job")?;
    let value: Value = parse_json(&body)?;
    blocking(move || p.orchestrator.bind_input(id, &key, &value).map(Json)).await
}

async fn run_job(State(p): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    let id = parse_id(&id, "job")?;
    blocking(move || p.orchestrator.start_job(id).map(Json)).await
}

async fn app_input(
    State(p): State<Shared>,
    bearer: Bearer,
    Path((id, key)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    let id = parse_id(&id, "job")?;
    p.orchestrator.input_document(bearer.as_deref(), id, &key).map(Json)
}

async fn app_output(
    State(p): State<Shared>,
    bearer: Bearer,
    Path((id, key)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let id = parse_id(&id, "job")?;
    blocking(move || {
        let doc = p.orchestrator.post_output(bearer.as_deref(), id, &key, &body)?;
        Ok((StatusCode::CREATED, Json(doc)))
    })
    .await
}

async fn app_finalize(State(p): State<Shared>, bearer: Bearer, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    let id = parse_id(&id, "job")?;
    p.orchestrator.finalize(bearer.as_deref(), id).map(Json)
}

/// Body is `{"message": ...}` or plain text.
async fn app_failure(
    State(p): State<Shared>,
    bearer: Bearer,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Job>> {
    let id = parse_id(&id, "job")?;
    let text = String::from_utf8_lossy(&body).into_owned();
    let message = serde_json::from_str::<Value>(&text)
        .ok()
        .and_then(|v| v.get("message").and_then(Value::as_str).map(str::to_string))
        .unwrap_or(text);
    p.orchestrator.fail(bearer.as_deref(), id, message.trim()).map(Json)
}
