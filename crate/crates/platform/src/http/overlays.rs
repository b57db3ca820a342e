// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::Response;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use pathharbor_core::overlay::{ColormapSpec, OverlayPyramid};

use super::{blocking, parse_id, parse_json, parse_num, raw, ApiResult, Bearer, Shared};
use crate::error::{ApiError, ErrorCode};
use crate::overlays::OverlayRequest;

pub const RAW_F32: &str = "application/x-float32-le";
pub const RAW_RGBA: &str = "image/x-raw-rgba8";

pub(super) fn routes() -> Router<Shared> {
    Router::new()
        .route("/v1/overlays", post(create).get(list))
        .route("/v1/overlays/{id}/tiles/{level}/{col}/{row}", put(write_tile))
        .route("/v1/overlays/{id}/value/{level}/{col}/{row}", get(value_tile))
        .route("/v1/overlays/{id}/render/{level}/{col}/{row}", get(render))
        .route("/v1/colormaps", get(colormaps))
}

type TilePath = Path<(String, String, String, String)>;

fn tile_pos(level: &str, col: &str, row: &str) -> ApiResult<(u32, u32, u32)> {
    Ok((parse_num(level, "level")?, parse_num(col, "col")?, parse_num(row, "row")?))
}

async fn create(State(p): State<Shared>, bearer: Bearer, body: Bytes) -> ApiResult<(StatusCode, Json<OverlayPyramid>)> {
    let req: OverlayRequest = parse_json(&body)?;
    let o = p.overlays.create(bearer.as_deref(), &req)?;
    Ok((StatusCode::CREATED, Json(o)))
}

async fn list(
    State(p): State<Shared>,
    bearer: Bearer,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<Vec<OverlayPyramid>>> {
    let slide = q
        .get("slide_id")
        .ok_or_else(|| ApiError::new(ErrorCode::BadRequest, "slide_id query parameter is required"))?;
    let slide = parse_id(slide, "slide")?;
    p.overlays.list(bearer.as_deref(), slide).map(Json)
}

async fn write_tile(
    State(p): State<Shared>,
    bearer: Bearer,
    Path((id, level, col, row)): TilePath,
    body: Bytes,
) -> ApiResult<StatusCode> {
    let id = parse_id(&id, "overlay")?;
    let (l, c, r) = tile_pos(&level, &col, &row)?;
    blocking(move || p.overlays.write_tile(bearer.as_deref(), id, l, c, r, &body)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn value_tile(State(p): State<Shared>, bearer: Bearer, Path((id, level, col, row)): TilePath) -> ApiResult<Response> {
    let id = parse_id(&id, "overlay")?;
    let (l, c, r) = tile_pos(&level, &col, &row)?;
    let bytes = blocking(move || p.overlays.value_tile(bearer.as_deref(), id, l, c, r)).await?;
    Ok(raw(RAW_F32, vec![], bytes))
}

async fn render(
    State(p): State<Shared>,
    bearer: Bearer,
    Path((id, level, col, row)): TilePath,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let id = parse_id(&id, "overlay")?;
    let pos = tile_pos(&level, &col, &row)?;
    let opacity: f64 = match q.get("opacity") {
        Some(o) => parse_num(o, "opacity")?,
        None => 1.0,
    };
    let colormap = q.get("colormap").filter(|c| !c.is_empty()).cloned();
    let bytes = blocking(move || p.overlays.render(bearer.as_deref(), id, pos, colormap.as_deref(), opacity)).await?;
    Ok(raw(RAW_RGBA, vec![], bytes))
}

async fn colormaps(State(p): State<Shared>) -> Json<Vec<ColormapSpec>> {
    Json(p.overlays.colormaps().to_vec())
}
