// SPDX-License-Identifier: Apache-2.0

//! Native slide endpoints and the DICOMweb-style gateway.

use axum::extract::{Path, State};
use axum::response::Response;
use axum::routing::{get, post};
use axum::{Json, Router};
use axum::body::Bytes;
use pathharbor_core::dicom;
use pathharbor_core::model::SlideInfo;
use pathharbor_core::slide::read_region;
use pathharbor_core::Id;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{blocking, parse_id, parse_json, parse_num, raw, ApiResult, Bearer, Shared};
use crate::error::ApiError;
use crate::slides::SlideEntry;
use crate::tokens::Resource;

pub const RAW_RGB: &str = "image/x-raw-rgb8";

pub(super) fn routes() -> Router<Shared> {
    Router::new()
        .route("/v1/slides", get(list))
        .route("/v1/slides/import", post(import))
        .route("/v1/slides/{id}/preprocess", post(preprocess))
        .route("/v1/slides/{id}/info", get(info))
        .route("/v1/slides/{id}/tile/level/{level}/position/{col}/{row}", get(tile))
        .route("/v1/slides/{id}/region/level/{level}/start/{x}/{y}/size/{w}/{h}", get(region))
        .route("/dicomweb/studies/{id}/series/{series}/metadata", get(series_metadata))
        .route("/dicomweb/studies/{id}/series/{series}/instances/{level}/metadata", get(instance_metadata))
        .route("/dicomweb/studies/{id}/series/{series}/instances/{level}/frames/{frame}", get(frame))
}

/// Resolves a slide the bearer may read.
fn entry(p: &Shared, bearer: &Bearer, id: &str) -> ApiResult<std::sync::Arc<SlideEntry>> {
    let id = parse_id(id, "slide")?;
    p.orchestrator.authorize(bearer.as_deref(), &Resource::Slide(id))?;
    p.slides.get(id).ok_or_else(|| ApiError::not_found(format!("slide {id}")))
}

async fn list(State(p): State<Shared>) -> Json<Vec<SlideInfo>> {
    Json(p.slides.list())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportRequest {
    path: std::path::PathBuf,
    case_alias: String,
}

async fn import(State(p): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: ImportRequest = parse_json(&body)?;
    blocking(move || {
        let (info, jobs) = p.import_slide(&req.path, &req.case_alias)?;
        let jobs: Vec<Value> = jobs.iter().map(|(j, created)| json!({"job_id": j.job_id, "created": created})).collect();
        Ok(Json(json!({ "slide": info, "preprocessing_jobs": jobs })))
    })
    .await
}

async fn preprocess(State(p): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let id = parse_id(&id, "slide")?;
    blocking(move || {
        let jobs = p.preprocess(id)?;
        let jobs: Vec<Value> = jobs.iter().map(|(j, created)| json!({"job_id": j.job_id, "created": created})).collect();
        Ok(Json(json!({ "preprocessing_jobs": jobs })))
    })
    .await
}

async fn info(State(p): State<Shared>, bearer: Bearer, Path(id): Path<String>) -> ApiResult<Json<SlideInfo>> {
    Ok(Json(entry(&p, &bearer, &id)?.info.clone()))
}

async fn tile(
    State(p): State<Shared>,
    bearer: Bearer,
    Path((id, level, col, row)): Path<(String, String, String, String)>,
) -> ApiResult<Response> {
    let e = entry(&p, &bearer, &id)?;
    let (level, col, row) = (parse_num(&level, "level")?, parse_num(&col, "col")?, parse_num(&row, "row")?);
    let ts = e.info.tile_size;
    let bytes = blocking(move || Ok(e.reader.read_tile(level, col, row)?)).await?;
    Ok(raw(RAW_RGB, vec![("x-tile-size", ts.to_string())], bytes))
}

async fn region(
    State(p): State<Shared>,
    bearer: Bearer,
    Path((id, level, x, y, w, h)): Path<(String, String, String, String, String, String)>,
) -> ApiResult<Response> {
    let e = entry(&p, &bearer, &id)?;
    let level: u32 = parse_num(&level, "level")?;
    let (x, y): (i64, i64) = (parse_num(&x, "x")?, parse_num(&y, "y")?);
    let (w, h): (u32, u32) = (parse_num(&w, "width")?, parse_num(&h, "height")?);
    let cap = p.config.region_cap_pixels;
    let img = blocking(move || Ok(read_region(e.reader.as_ref(), level, x, y, w, h, cap)?)).await?;
    Ok(raw(
        RAW_RGB,
        vec![("x-region-width", w.to_string()), ("x-region-height", h.to_string())],
        img.into_bytes(),
    ))
}

fn check_series(series: &str, id: Id) -> ApiResult<()> {
    if series != "0" {
        return Err(ApiError::not_found(format!("series {series} of study {id}")));
    }
    Ok(())
}

async fn series_metadata(
    State(p): State<Shared>,
    bearer: Bearer,
    Path((id, series)): Path<(String, String)>,
) -> ApiResult<Json<Vec<Value>>> {
    let e = entry(&p, &bearer, &id)?;
    check_series(&series, e.info.slide_id)?;
    Ok(Json(dicom::series_metadata(&e.info)))
}

async fn instance_metadata(
    State(p): State<Shared>,
    bearer: Bearer,
    Path((id, series, level)): Path<(String, String, String)>,
) -> ApiResult<Json<Vec<Value>>> {
    let e = entry(&p, &bearer, &id)?;
    check_series(&series, e.info.slide_id)?;
    let level: u32 = parse_num(&level, "instance")?;
    Ok(Json(vec![dicom::instance_metadata(&e.info, level)?]))
}

async fn frame(
    State(p): State<Shared>,
    bearer: Bearer,
    Path((id, series, level, frame)): Path<(String, String, String, String)>,
) -> ApiResult<Response> {
    let e = entry(&p, &bearer, &id)?;
    check_series(&series, e.info.slide_id)?;
    let level: u32 = parse_num(&level, "instance")?;
    let frame: u32 = parse_num(&frame, "frame")?;
    let (col, row) = dicom::frame_to_tile(&e.info, level, frame)?;
    let ts = e.info.tile_size;
    let bytes = blocking(move || Ok(e.reader.read_tile(level, col, row)?)).await?;
    Ok(raw(RAW_RGB, vec![("x-tile-size", ts.to_string())], bytes))
}
