// SPDX-License-Identifier: Apache-2.0

//! Shared domain vocabulary: slides, annotations, primitives, class values,
//! collections and App Descriptions, plus the validation rules every other
//! module relies on.

mod classes;
mod ead;
mod entity;
mod payload;
mod slide_info;
mod store;
mod violation;

pub use classes::{
    is_segment, parse_class_value, ClassTree, GLOBAL_NAMESPACE, GLOBAL_CLASSES,
};
pub use ead::{
    qualify_class, validate_ead, AppDescription, EadError, EadReport, IoSpec, Mode,
    ModeSpec, RefDirection, ReferenceTarget, MAX_NESTING,
};
pub use entity::{
    Annotation, ClassValue, Collection, Creator, DataType, Entity, Geometry, Point, Primitive,
    PrimitiveValue,
};
pub use payload::{check_annotation_geometry, validate_payload, ReferenceScope};
pub use slide_info::{grid_for, level_dims, levels_for, SlideInfo, SlideInfoError, FORMAT_PTC1};
pub use store::{resolve_reference, ChainLink, EntityStore, MemoryStore, ResolveError, StoredLink};
pub use violation::{Violation, ViolationCode};
