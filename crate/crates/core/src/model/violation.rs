// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::{Deserialize, Serialize};

/// Machine-readable violation codes shared by EAD, payload and geometry checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    SchemaViolation,
    UnsupportedSchemaVersion,
    InvalidNamespace,
    InvalidKey,
    NoModes,
    UnknownKey,
    DuplicateKey,
    MissingItems,
    UnexpectedItems,
    InvalidItemType,
    NestingTooDeep,
    UnexpectedClasses,
    InvalidClassName,
    WsiOutput,
    BadReferenceFormat,
    DanglingReference,
    ReferenceOutsideMode,
    ReferenceCycle,
    MissingWsiInput,
    PreprocessingWsiCount,
    PreprocessingAnnotationInput,
    // payload and geometry
    TypeMismatch,
    OutOfBounds,
    DegenerateShape,
    UndeclaredClass,
    BadReference,
    HeterogeneousCollection,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            SchemaViolation => "SCHEMA_VIOLATION",
            UnsupportedSchemaVersion => "UNSUPPORTED_SCHEMA_VERSION",
            InvalidNamespace => "INVALID_NAMESPACE",
            InvalidKey => "INVALID_KEY",
            NoModes => "NO_MODES",
            UnknownKey => "UNKNOWN_KEY",
            DuplicateKey => "DUPLICATE_KEY",
            MissingItems => "MISSING_ITEMS",
            UnexpectedItems => "UNEXPECTED_ITEMS",
            InvalidItemType => "INVALID_ITEM_TYPE",
            NestingTooDeep => "NESTING_TOO_DEEP",
            UnexpectedClasses => "UNEXPECTED_CLASSES",
            InvalidClassName => "INVALID_CLASS_NAME",
            WsiOutput => "WSI_OUTPUT",
            BadReferenceFormat => "BAD_REFERENCE_FORMAT",
            DanglingReference => "DANGLING_REFERENCE",
            ReferenceOutsideMode => "REFERENCE_OUTSIDE_MODE",
            ReferenceCycle => "REFERENCE_CYCLE",
            MissingWsiInput => "MISSING_WSI_INPUT",
            PreprocessingWsiCount => "PREPROCESSING_WSI_COUNT",
            PreprocessingAnnotationInput => "PREPROCESSING_ANNOTATION_INPUT",
            TypeMismatch => "TYPE_MISMATCH",
            OutOfBounds => "OUT_OF_BOUNDS",
            DegenerateShape => "DEGENERATE_SHAPE",
            UndeclaredClass => "UNDECLARED_CLASS",
            BadReference => "BAD_REFERENCE",
            HeterogeneousCollection => "HETEROGENEOUS_COLLECTION",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single contract violation with the offending document path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(code: ViolationCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation { code, path: path.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.path, self.message)
    }
}

impl std::error::Error for Violation {}
