// SPDX-License-Identifier: Apache-2.0

//! Workbench API: what a viewer needs to browse slides, pick apps and read
//! overlays. Viewer tokens are scoped to one slide.

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use pathharbor_core::model::SlideInfo;
use serde_json::{json, Value};

use super::{parse_id, ApiResult, Shared};

pub const CONFIG_VERSION: &str = "1";

pub(super) fn routes() -> Router<Shared> {
    Router::new()
        .route("/wb/v1/slides", get(slides))
        .route("/wb/v1/apps", get(apps))
        .route("/wb/v1/scopes/{slide_id}", post(scope))
        .route("/wb/v1/config", get(config))
}

async fn slides(State(p): State<Shared>) -> Json<Vec<SlideInfo>> {
    Json(p.slides.list())
}

async fn apps(State(p): State<Shared>) -> Json<Vec<Value>> {
    Json(
        p.orchestrator
            .apps()
            .into_iter()
            .map(|a| {
                json!({
                    "app_id": a.app_id,
                    "namespace": a.namespace,
                    "name": a.ead.name,
                    "description": a.ead.description,
                    "modes": a.ead.modes.keys().collect::<Vec<_>>(),
                })
            })
            .collect(),
    )
}

async fn scope(State(p): State<Shared>, Path(slide): Path<String>) -> ApiResult<(StatusCode, Json<Value>)> {
    let slide = parse_id(&slide, "slide")?;
    let (token, secret) = p.orchestrator.issue_viewer_token(slide)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "token": secret,
            "token_id": token.token_id,
            "slide_id": slide,
            "expires_at_ms": token.expires_at_ms,
        })),
    ))
}

/// Bootstrap document. Paths are relative to the server origin.
async fn config(State(p): State<Shared>) -> Json<Value> {
    Json(json!({
        "config_version": CONFIG_VERSION,
        "slide_api": "/v1/slides",
        "dicomweb": "/dicomweb",
        "platform_api": "/v1",
        "overlay_api": "/v1/overlays",
        "colormaps": p.overlays.colormaps(),
        "tile_content_type": super::slides::RAW_RGB,
        "overlay_content_type": super::overlays::RAW_RGBA,
        "auth": "bearer",
        "region_cap_pixels": p.config.region_cap_pixels,
    }))
}
