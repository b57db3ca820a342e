// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use pathharbor_core::model::Violation;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Machine-readable error codes returned by every service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    // generic
    BadRequest,
    NotFound,
    Unauthorized,
    Internal,
    // orchestrator
    InvalidEad,
    DuplicateNamespace,
    UnknownApp,
    UnsupportedMode,
    WrongState,
    UnknownKey,
    MissingOutput,
    AlreadyPosted,
    DuplicateId,
    ExecutorLaunchFailed,
    InvalidExecutor,
    // payload violations
    TypeMismatch,
    OutOfBounds,
    DegenerateShape,
    UndeclaredClass,
    BadReference,
    HeterogeneousCollection,
    // slides
    LevelOutOfRange,
    TileOutOfRange,
    FrameOutOfRange,
    RegionTooLarge,
    BadMagic,
    UnsupportedVersion,
    TruncatedFile,
    IndexCorrupt,
    SourceUnreadable,
    PlacementOverflow,
    InvalidSpec,
    // overlays
    GeometryMismatch,
    ValueOutOfRange,
    Sealed,
    KindMismatch,
    InvalidQuantity,
    InvalidOpacity,
}

impl ErrorCode {
    pub fn as_str(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    }

    pub fn parse(code: &str) -> Option<Self> {
        serde_json::from_value(Value::String(code.to_string())).ok()
    }

    pub fn http_status(self) -> u16 {
        use ErrorCode::*;
        match self {
            BadRequest | InvalidSpec | InvalidOpacity | RegionTooLarge | InvalidExecutor => 400,
            Unauthorized => 403,
            NotFound | UnknownApp | LevelOutOfRange | TileOutOfRange | FrameOutOfRange => 404,
            WrongState | DuplicateNamespace | AlreadyPosted | DuplicateId | Sealed => 409,
            Internal | BadMagic | UnsupportedVersion | TruncatedFile | IndexCorrupt | SourceUnreadable
            | ExecutorLaunchFailed => 500,
            _ => 422,
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str())
    }
}

/// Error document shared by all HTTP endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into(), path: None, details: None }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn not_found(what: impl fmt::Display) -> Self {
        ApiError::new(ErrorCode::NotFound, format!("{what} not found"))
    }

    pub fn unauthorized(reason: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::Unauthorized, reason)
    }

    pub fn wrong_state(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::WrongState, message)
    }

    pub fn internal(e: impl fmt::Display) -> Self {
        ApiError::new(ErrorCode::Internal, e.to_string())
    }

    pub fn status(&self) -> u16 {
        self.code.http_status()
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)?;
        if let Some(p) = &self.path {
            write!(f, " (at {p})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ApiError {}

impl From<Violation> for ApiError {
    fn from(v: Violation) -> Self {
        let code = ErrorCode::parse(v.code.as_str()).unwrap_or(ErrorCode::BadRequest);
        ApiError { code, message: v.message, path: Some(v.path), details: None }
    }
}

impl From<pathharbor_core::slide::SlideError> for ApiError {
    fn from(e: pathharbor_core::slide::SlideError) -> Self {
        ApiError::new(ErrorCode::parse(e.code()).unwrap_or(ErrorCode::Internal), e.to_string())
    }
}

impl From<pathharbor_core::overlay::OverlayError> for ApiError {
    fn from(e: pathharbor_core::overlay::OverlayError) -> Self {
        ApiError::new(ErrorCode::parse(e.code()).unwrap_or(ErrorCode::BadRequest), e.to_string())
    }
}

impl From<pathharbor_core::dicom::DicomError> for ApiError {
    fn from(e: pathharbor_core::dicom::DicomError) -> Self {
        ApiError::new(ErrorCode::parse(e.code()).unwrap_or(ErrorCode::BadRequest), e.to_string())
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::internal(e)
    }
}
