// SPDX-License-Identifier: Apache-2.0

//! Blocking HTTP client for the platform APIs, plus the app-side view of
//! the launch contract ([`AppContext`]).

use std::time::Duration;

use pathharbor_core::model::SlideInfo;
use pathharbor_core::slide::RgbImage;
use pathharbor_core::Id;
use serde_json::Value;
use ureq::Agent;

use crate::error::{ApiError, ErrorCode};
use crate::executor::{ENV_APP_API, ENV_JOB_ID, ENV_SLIDE_API, ENV_TOKEN};

const MAX_BODY: u64 = 256 << 20;

#[derive(Clone)]
pub struct Client {
    agent: Agent,
    base: String,
    token: Option<String>,
}

fn transport(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(ErrorCode::Internal, format!("transport: {e}"))
}

impl Client {
    pub fn new(base: impl Into<String>, token: Option<String>) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .new_agent();
        Client { agent, base: base.into().trim_end_matches('/').to_string(), token }
    }

    pub fn with_token(&self, token: Option<String>) -> Self {
        Client { token, ..self.clone() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    /// Sends a request; returns the body of a 2xx response, the decoded
    /// error otherwise.
    pub fn send(&self, method: &str, path: &str, body: Option<(&str, &[u8])>) -> Result<Vec<u8>, ApiError> {
        let url = format!("{}{}", self.base, path);
        let auth = self.token.as_ref().map(|t| format!("Bearer {t}"));
        let result = match method {
            "GET" => {
                let mut r = self.agent.get(&url);
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                r.call()
            }
            "POST" | "PUT" => {
                let mut r = if method == "POST" { self.agent.post(&url) } else { self.agent.put(&url) };
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                let (ct, bytes) = body.unwrap_or(("application/json", b""));
                r.header("Content-Type", ct).send(bytes)
            }
            other => return Err(ApiError::new(ErrorCode::BadRequest, format!("unsupported method {other}"))),
        };
        let mut resp = result.map_err(transport)?;
        let status = resp.status().as_u16();
        let bytes = resp.body_mut().with_config().limit(MAX_BODY).read_to_vec().map_err(transport)?;
        if (200..300).contains(&status) {
            return Ok(bytes);
        }
        Err(serde_json::from_slice::<ApiError>(&bytes)
            .unwrap_or_else(|_| ApiError::new(ErrorCode::Internal, format!("HTTP {status}: {}", String::from_utf8_lossy(&bytes)))))
    }

    fn json(bytes: Vec<u8>) -> Result<Value, ApiError> {
        if bytes.is_empty() {
            return Ok(Value::Null);
        }
        serde_json::from_slice(&bytes).map_err(transport)
    }

    pub fn get_json(&self, path: &str) -> Result<Value, ApiError> {
        Self::json(self.send("GET", path, None)?)
    }

    pub fn get_bytes(&self, path: &str) -> Result<Vec<u8>, ApiError> {
        self.send("GET", path, None)
    }

    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value, ApiError> {
        let b = serde_json::to_vec(body).map_err(ApiError::internal)?;
        Self::json(self.send("POST", path, Some(("application/json", &b)))?)
    }

    pub fn put_json(&self, path: &str, body: &Value) -> Result<Value, ApiError> {
        let b = serde_json::to_vec(body).map_err(ApiError::internal)?;
        Self::json(self.send("PUT", path, Some(("application/json", &b)))?)
    }

    pub fn put_bytes(&self, path: &str, content_type: &str, body: &[u8]) -> Result<Vec<u8>, ApiError> {
        self.send("PUT", path, Some((content_type, body)))
    }

    // ---- slide service ----

    pub fn slides(&self) -> Result<Vec<SlideInfo>, ApiError> {
        serde_json::from_value(self.get_json("/v1/slides")?).map_err(transport)
    }

    pub fn slide_info(&self, slide: Id) -> Result<SlideInfo, ApiError> {
        serde_json::from_value(self.get_json(&format!("/v1/slides/{slide}/info"))?).map_err(transport)
    }

    pub fn tile(&self, slide: Id, level: u32, col: u32, row: u32) -> Result<Vec<u8>, ApiError> {
        self.get_bytes(&format!("/v1/slides/{slide}/tile/level/{level}/position/{col}/{row}"))
    }

    pub fn region(&self, slide: Id, level: u32, x: i64, y: i64, w: u32, h: u32) -> Result<RgbImage, ApiError> {
        let bytes = self.get_bytes(&format!("/v1/slides/{slide}/region/level/{level}/start/{x}/{y}/size/{w}/{h}"))?;
        RgbImage::from_raw(w, h, bytes).ok_or_else(|| transport("region payload has the wrong size"))
    }
}

/// What a launched app receives through its environment.
#[derive(Clone)]
pub struct AppContext {
    pub job_id: Id,
    /// App Interface, e.g. `http://host:port/app/v1`.
    pub app: Client,
    /// Slide service base, e.g. `http://host:port/v1`; paths below are
    /// relative to the server origin.
    pub platform: Client,
}

impl AppContext {
    pub fn from_env() -> Result<Self, String> {
        let var = |k: &str| std::env::var(k).map_err(|_| format!("{k} is not set"));
        let job_id: Id = var(ENV_JOB_ID)?.parse().map_err(|e| format!("{ENV_JOB_ID}: {e}"))?;
        let token = var(ENV_TOKEN)?;
        let app_api = var(ENV_APP_API)?;
        let slide_api = var(ENV_SLIDE_API)?;
        let origin = slide_api.trim_end_matches('/').trim_end_matches("/v1").to_string();
        Ok(AppContext {
            job_id,
            app: Client::new(app_api, Some(token.clone())),
            platform: Client::new(origin, Some(token)),
        })
    }

    pub fn input(&self, key: &str) -> Result<Value, ApiError> {
        self.app.get_json(&format!("/{}/inputs/{key}", self.job_id))
    }

    /// Posts an output; returns the stored entity with assigned ids.
    pub fn post_output(&self, key: &str, entity: &Value) -> Result<Value, ApiError> {
        self.app.post_json(&format!("/{}/outputs/{key}", self.job_id), entity)
    }

    pub fn finalize(&self) -> Result<Value, ApiError> {
        Client::json(self.app.send("PUT", &format!("/{}/finalize", self.job_id), None)?)
    }

    pub fn fail(&self, message: &str) -> Result<Value, ApiError> {
        self.app.put_json(&format!("/{}/failure", self.job_id), &serde_json::json!({ "message": message }))
    }
}
