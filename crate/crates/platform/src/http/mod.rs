// SPDX-License-Identifier: Apache-2.0

//! HTTP surface of all services on one router.
//!
//! | prefix | service |
//! |---|---|
//! | `/v1/slides`, `/dicomweb` | slide service (bearer token) |
//! | `/app/v1` | App Interface (job token) |
//! | `/v1/apps`, `/v1/jobs` | platform API |
//! | `/v1/overlays`, `/v1/colormaps` | overlay service |
//! | `/wb/v1` | Workbench API |
//!
//! Errors are `{"code": ..., "message": ..., "path"?, "details"?}`.

mod jobs;
mod overlays;
mod slides;
mod workbench;

use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, FromRequestParts, Request};
use axum::http::header::{self, HeaderValue};
use axum::http::request::Parts;
use axum::http::{Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use pathharbor_core::Id;
use serde::de::DeserializeOwned;

use crate::error::{ApiError, ErrorCode};
use crate::platform::Platform;

pub(crate) type Shared = Arc<Platform>;

/// Request bodies up to this size are accepted.
pub const BODY_LIMIT: usize = 64 << 20;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

pub(crate) type ApiResult<T> = Result<T, ApiError>;

/// The bearer secret of a request, if any.
pub(crate) struct Bearer(pub Option<String>);

impl Bearer {
    pub fn as_deref(&self) -> Option<&str> {
        self.0.as_deref()
    }
}

impl<S: Send + Sync> FromRequestParts<S> for Bearer {
    type Rejection = std::convert::Infallible;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        let secret = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(|s| s.trim().to_string());
        Ok(Bearer(secret))
    }
}

/// Runs `f` on the blocking pool.
pub(crate) async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

pub(crate) fn parse_id(text: &str, what: &str) -> ApiResult<Id> {
    text.parse().map_err(|_| ApiError::not_found(format!("{what} {text}")))
}

pub(crate) fn parse_num<T: std::str::FromStr>(text: &str, what: &str) -> ApiResult<T> {
    text.parse().map_err(|_| ApiError::new(ErrorCode::BadRequest, format!("{what} {text:?} is not a valid number")))
}

pub(crate) fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid JSON body: {e}")))
}

pub(crate) fn raw(content_type: &'static str, headers: Vec<(&'static str, String)>, body: Vec<u8>) -> Response {
    let mut resp = body.into_response();
    resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    for (k, v) in headers {
        if let Ok(v) = HeaderValue::from_str(&v) {
            resp.headers_mut().insert(k, v);
        }
    }
    resp
}

/// Permissive CORS so a workbench served from another origin can call in.
async fn cors(req: Request, next: Next) -> Response {
    let mut resp = if req.method() == Method::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(req).await
    };
    let h = resp.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("authorization, content-type"));
    h.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("GET, POST, PUT, OPTIONS"));
    h.insert(header::ACCESS_CONTROL_EXPOSE_HEADERS, HeaderValue::from_static("x-tile-size, x-region-width, x-region-height"));
    resp
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(platform: Arc<Platform>) -> Router {
    Router::new()
        .merge(slides::routes())
        .merge(jobs::routes())
        .merge(overlays::routes())
        .merge(workbench::routes())
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(middleware::from_fn(cors))
        .with_state(platform)
}
