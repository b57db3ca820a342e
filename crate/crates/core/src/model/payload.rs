// SPDX-License-Identifier: Apache-2.0

//! Output-side contract enforcement: payload type, geometry, class and
//! reference checks against an App Description.

use std::collections::{BTreeMap, BTreeSet};

use super::classes::{parse_class_value, GLOBAL_CLASSES, GLOBAL_NAMESPACE};
use super::ead::{AppDescription, IoSpec, ReferenceTarget, MAX_NESTING};
use super::entity::{Annotation, Entity, Geometry, PrimitiveValue};
use super::slide_info::SlideInfo;
use super::violation::{Violation, ViolationCode};
use crate::Id;

/// Ids a payload may reference: the bound slides and, per io key, the ids of
/// the entity bound or posted under that key (including nested items).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReferenceScope {
    pub slides: BTreeSet<Id>,
    pub keys: BTreeMap<String, BTreeSet<Id>>,
}

impl ReferenceScope {
    pub fn bind_slide(&mut self, key: &str, slide: Id) {
        self.slides.insert(slide);
        self.keys.entry(key.to_string()).or_default().insert(slide);
    }

    pub fn bind_entity(&mut self, key: &str, entity: &Entity) {
        self.keys.entry(key.to_string()).or_default().extend(entity.ids());
    }

    fn contains_any(&self, id: Id) -> bool {
        self.slides.contains(&id) || self.keys.values().any(|ids| ids.contains(&id))
    }
}

/// Checks the annotation invariants against the slide extent. Coordinates
/// are base-level pixels in the closed box `[0, width] x [0, height]`; a
/// circle's bounding box must lie inside it.
pub fn check_annotation_geometry(a: &Annotation, info: &SlideInfo) -> Result<(), Violation> {
    let (w, h) = (info.width_base as i64, info.height_base as i64);
    let inside = |p: &[i64; 2]| (0..=w).contains(&p[0]) && (0..=h).contains(&p[1]);
    let degenerate = |msg: String| Err(Violation::new(ViolationCode::DegenerateShape, "coordinates", msg));
    let out_of_bounds = |p: [i64; 2]| {
        Err(Violation::new(
            ViolationCode::OutOfBounds,
            "coordinates",
            format!("({}, {}) lies outside [0, {w}] x [0, {h}]", p[0], p[1]),
        ))
    };
    let vertices = |coords: &[[i64; 2]], min: usize, kind: &str| -> Result<(), Violation> {
        if coords.len() < min {
            return degenerate(format!("{kind} needs at least {min} vertices, found {}", coords.len()));
        }
        match coords.iter().find(|p| !inside(p)) {
            Some(p) => out_of_bounds(*p),
            None => Ok(()),
        }
    };
    match &a.geometry {
        Geometry::Point { coordinates } => vertices(std::slice::from_ref(coordinates), 1, "point"),
        Geometry::Line { coordinates } => vertices(coordinates, 2, "line"),
        Geometry::Arrow { coordinates } => vertices(coordinates, 2, "arrow"),
        Geometry::Polygon { coordinates } => vertices(coordinates, 3, "polygon"),
        Geometry::Rectangle { upper_left, width, height } => {
            if *width < 1 || *height < 1 {
                return degenerate(format!("rectangle {width}x{height} has no area"));
            }
            let lower_right = [upper_left[0].saturating_add(*width), upper_left[1].saturating_add(*height)];
            for p in [*upper_left, lower_right] {
                if !inside(&p) {
                    return out_of_bounds(p);
                }
            }
            Ok(())
        }
        Geometry::Circle { center, radius } => {
            if *radius < 1 {
                return degenerate(format!("circle radius {radius} < 1"));
            }
            let corners = [
                [center[0].saturating_sub(*radius), center[1].saturating_sub(*radius)],
                [center[0].saturating_add(*radius), center[1].saturating_add(*radius)],
            ];
            for p in corners {
                if !inside(&p) {
                    return out_of_bounds(p);
                }
            }
            Ok(())
        }
    }
}

/// Validates `payload` posted or bound under `key` of `ead`.
pub fn validate_payload(
    ead: &AppDescription,
    key: &str,
    payload: &Entity,
    slide: &SlideInfo,
    scope: &ReferenceScope,
) -> Result<(), Violation> {
    let spec = ead.io.get(key).ok_or_else(|| {
        Violation::new(ViolationCode::TypeMismatch, key, format!("{key:?} is not declared in io"))
    })?;
    Checker { ead, slide, scope }.check(spec, payload, key, 0)
}

struct Checker<'a> {
    ead: &'a AppDescription,
    slide: &'a SlideInfo,
    scope: &'a ReferenceScope,
}

impl Checker<'_> {
    fn check(&self, spec: &IoSpec, entity: &Entity, path: &str, depth: usize) -> Result<(), Violation> {
        let found = entity.data_type();
        if found != spec.data_type {
            return Err(Violation::new(
                ViolationCode::TypeMismatch,
                path,
                format!("expected {}, found {found}", spec.data_type),
            ));
        }
        match entity {
            Entity::Annotation(a) => {
                check_annotation_geometry(a, self.slide)
                    .map_err(|v| Violation { path: format!("{path}.{}", v.path), ..v })?;
            }
            Entity::Primitive(p) => {
                if let PrimitiveValue::Float(f) = p.value {
                    if !f.is_finite() {
                        return Err(Violation::new(ViolationCode::TypeMismatch, format!("{path}.value"), "float must be finite"));
                    }
                }
            }
            Entity::Class(c) => self.check_class(spec, &c.value, &format!("{path}.value"))?,
            Entity::Collection(c) => {
                if depth + 1 > MAX_NESTING {
                    return Err(Violation::new(
                        ViolationCode::TypeMismatch,
                        path,
                        format!("collections nest at most {MAX_NESTING} deep"),
                    ));
                }
                let item_spec = spec.items.as_deref().ok_or_else(|| {
                    Violation::new(ViolationCode::TypeMismatch, path, "io spec declares no items")
                })?;
                for (i, item) in c.items.iter().enumerate() {
                    if item.data_type() != c.item_type {
                        return Err(Violation::new(
                            ViolationCode::HeterogeneousCollection,
                            format!("{path}.items[{i}]"),
                            format!("collection of {} holds a {}", c.item_type, item.data_type()),
                        ));
                    }
                }
                if c.item_type != item_spec.data_type {
                    return Err(Violation::new(
                        ViolationCode::TypeMismatch,
                        format!("{path}.item_type"),
                        format!("expected items of type {}, found {}", item_spec.data_type, c.item_type),
                    ));
                }
                for (i, item) in c.items.iter().enumerate() {
                    self.check(item_spec, item, &format!("{path}.items[{i}]"), depth + 1)?;
                }
            }
        }
        self.check_reference(spec, entity, path)
    }

    fn check_class(&self, spec: &IoSpec, value: &str, path: &str) -> Result<(), Violation> {
        let undeclared = |why: String| Err(Violation::new(ViolationCode::UndeclaredClass, path, why));
        let Some((namespace, suffix)) = parse_class_value(value) else {
            return undeclared(format!("{value:?} does not match <namespace>.classes.<segment>"));
        };
        if namespace == GLOBAL_NAMESPACE {
            return if GLOBAL_CLASSES.contains(&suffix) {
                Ok(())
            } else {
                undeclared(format!("{suffix:?} is not a global class"))
            };
        }
        if namespace != self.ead.namespace || !self.ead.classes.declares(suffix) {
            return undeclared(format!("{value:?} is not declared by {}", self.ead.namespace));
        }
        if let Some(allowed) = &spec.classes {
            if !allowed.iter().any(|a| a == suffix) {
                return undeclared(format!("{suffix:?} is not allowed for this key"));
            }
        }
        Ok(())
    }

    fn check_reference(&self, spec: &IoSpec, entity: &Entity, path: &str) -> Result<(), Violation> {
        let reference = entity.reference();
        let bad = |why: String| Err(Violation::new(ViolationCode::BadReference, format!("{path}.reference"), why));
        if let Some(target) = spec.reference_to.as_deref().and_then(ReferenceTarget::parse) {
            let allowed = self.scope.keys.get(&target.key);
            return match reference {
                Some(r) if allowed.is_some_and(|ids| ids.contains(&r)) => Ok(()),
                Some(r) => bad(format!("{r} is not an entity of {}", spec.reference_to.as_deref().unwrap_or_default())),
                None => bad(format!("a reference to {} is required", spec.reference_to.as_deref().unwrap_or_default())),
            };
        }
        match (entity, reference) {
            (Entity::Annotation(_), Some(r)) if self.scope.slides.contains(&r) || self.scope.contains_any(r) => Ok(()),
            (Entity::Annotation(_), _) => bad("annotations must reference a bound slide".into()),
            (_, None) => Ok(()),
            (_, Some(r)) if self.scope.contains_any(r) => Ok(()),
            (_, Some(r)) => bad(format!("{r} is not reachable from the job's bindings")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AppDescription, ClassValue, Collection, DataType, Primitive};
    use serde_json::json;

    fn ead() -> AppDescription {
        AppDescription::parse(
            &json!({
                "schema_version": "1",
                "namespace": "org.acme.tpsdemo.v1",
                "name": "TPS demo",
                "modes": {"standalone": {"inputs": ["slide", "roi"], "outputs": ["cells", "labels", "tps_score"]}},
                "io": {
                    "slide": {"type": "wsi"},
                    "roi": {"type": "rectangle", "reference_to": "inputs.slide"},
                    "cells": {"type": "collection", "items": {"type": "point"}, "reference_to": "inputs.roi"},
                    "labels": {"type": "collection", "items": {"type": "class", "classes": ["tumor.positive"], "reference_to": "outputs.cells"}},
                    "tps_score": {"type": "float", "reference_to": "inputs.roi"}
                },
                "classes": {"tumor": {"positive": {}, "negative": {}}}
            })
            .to_string(),
        )
        .unwrap()
    }

    fn slide() -> SlideInfo {
        SlideInfo::new(Id::from_bytes([9; 16]), 1024, 768, 256, 250)
    }

    fn scope() -> (ReferenceScope, Id) {
        let roi_id = Id::from_bytes([1; 16]);
        let mut roi = Entity::from(Annotation::rectangle(0, 0, 1024, 768, slide().slide_id));
        roi.set_id(roi_id);
        let mut scope = ReferenceScope::default();
        scope.bind_slide("slide", slide().slide_id);
        scope.bind_entity("roi", &roi);
        (scope, roi_id)
    }

    fn points(coords: &[(i64, i64)]) -> Entity {
        let s = slide().slide_id;
        let mut c = Collection::new(DataType::Point, coords.iter().map(|&(x, y)| Annotation::point(x, y, s).into()).collect());
        c.reference = Some(scope().1);
        c.into()
    }

    #[test]
    fn accepts_in_bounds_points() {
        let (scope, _) = scope();
        assert_eq!(validate_payload(&ead(), "cells", &points(&[(1, 1), (20, 30), (500, 700)]), &slide(), &scope), Ok(()));
    }

    #[test]
    fn closed_upper_bound() {
        let (scope, _) = scope();
        assert_eq!(validate_payload(&ead(), "cells", &points(&[(1024, 5)]), &slide(), &scope), Ok(()));
        let err = validate_payload(&ead(), "cells", &points(&[(1025, 5)]), &slide(), &scope).unwrap_err();
        assert_eq!(err.code, ViolationCode::OutOfBounds);
        assert_eq!(err.path, "cells.items[0].coordinates");
    }

    #[test]
    fn heterogeneous_collection() {
        let (scope, roi) = scope();
        let s = slide().slide_id;
        let mut c = Collection::new(
            DataType::Point,
            vec![Annotation::point(1, 1, s).into(), Annotation::rectangle(0, 0, 5, 5, s).into()],
        );
        c.reference = Some(roi);
        let err = validate_payload(&ead(), "cells", &c.into(), &slide(), &scope).unwrap_err();
        assert_eq!(err.code, ViolationCode::HeterogeneousCollection);
    }

    #[test]
    fn type_mismatch() {
        let (scope, roi) = scope();
        let mut p = Primitive::new(PrimitiveValue::Integer(30));
        p.reference = Some(roi);
        let err = validate_payload(&ead(), "tps_score", &p.into(), &slide(), &scope).unwrap_err();
        assert_eq!(err.code, ViolationCode::TypeMismatch);
    }

    #[test]
    fn references_must_target_declared_key() {
        let (scope, _) = scope();
        let mut p = Primitive::new(PrimitiveValue::Float(30.0));
        p.reference = Some(Id::from_bytes([3; 16]));
        let err = validate_payload(&ead(), "tps_score", &p.clone().into(), &slide(), &scope).unwrap_err();
        assert_eq!(err.code, ViolationCode::BadReference);
        p.reference = Some(slide().slide_id);
        assert_eq!(validate_payload(&ead(), "tps_score", &p.into(), &slide(), &scope).unwrap_err().code, ViolationCode::BadReference);
    }

    #[test]
    fn class_values() {
        let (mut scope, _) = scope();
        let mut cells = points(&[(5, 5)]);
        cells.assign_missing_ids(b"cells");
        scope.bind_entity("cells", &cells);
        let point_id = cells.ids()[1];
        let label = |v: &str| -> Entity {
            Collection::new(DataType::Class, vec![ClassValue::new(v, point_id).into()]).into()
        };
        let ok = label("org.acme.tpsdemo.v1.classes.tumor.positive");
        assert_eq!(validate_payload(&ead(), "labels", &ok, &slide(), &scope), Ok(()));
        let global = label("org.pathharbor.global.classes.roi");
        assert_eq!(validate_payload(&ead(), "labels", &global, &slide(), &scope), Ok(()));
        for bad in [
            "org.acme.tpsdemo.v1.classes.tumor.negative",
            "org.acme.tpsdemo.v1.classes.stroma",
            "org.other.app.v1.classes.tumor.positive",
            "org.pathharbor.global.classes.nope",
            "garbage",
        ] {
            let err = validate_payload(&ead(), "labels", &label(bad), &slide(), &scope).unwrap_err();
            assert_eq!(err.code, ViolationCode::UndeclaredClass, "{bad}");
        }
    }

    #[test]
    fn geometry_rules() {
        let info = slide();
        let s = info.slide_id;
        assert_eq!(check_annotation_geometry(&Annotation::rectangle(0, 0, 1024, 768, s), &info), Ok(()));
        let poly = Annotation::new(Geometry::Polygon { coordinates: vec![[0, 0], [5, 5]] }, s);
        assert_eq!(check_annotation_geometry(&poly, &info).unwrap_err().code, ViolationCode::DegenerateShape);
        let circle = Annotation::new(Geometry::Circle { center: [10, 10], radius: 20 }, s);
        assert_eq!(check_annotation_geometry(&circle, &info).unwrap_err().code, ViolationCode::OutOfBounds);
        let circle = Annotation::new(Geometry::Circle { center: [20, 20], radius: 20 }, s);
        assert_eq!(check_annotation_geometry(&circle, &info), Ok(()));
        let line = Annotation::new(Geometry::Line { coordinates: vec![[0, 0]] }, s);
        assert_eq!(check_annotation_geometry(&line, &info).unwrap_err().code, ViolationCode::DegenerateShape);
        assert_eq!(
            check_annotation_geometry(&Annotation::rectangle(0, 0, 1, 0, s), &info).unwrap_err().code,
            ViolationCode::DegenerateShape
        );
        assert_eq!(
            check_annotation_geometry(&Annotation::rectangle(1, 0, 1024, 768, s), &info).unwrap_err().code,
            ViolationCode::OutOfBounds
        );
        assert_eq!(
            check_annotation_geometry(&Annotation::point(-1, 0, s), &info).unwrap_err().code,
            ViolationCode::OutOfBounds
        );
    }
}
