// SPDX-License-Identifier: Apache-2.0

//! App Descriptions (EADs): the machine-readable contract of an app.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::classes::{is_segment, ClassTree};
use super::entity::DataType;
use super::violation::{Violation, ViolationCode};

/// Maximum collection nesting depth.
pub const MAX_NESTING: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Standalone,
    Preprocessing,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Standalone => "standalone",
            Mode::Preprocessing => "preprocessing",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSpec {
    #[serde(rename = "type")]
    pub data_type: DataType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Box<IoSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
}

impl IoSpec {
    pub fn of(data_type: DataType) -> Self {
        IoSpec { data_type, items: None, reference_to: None, classes: None }
    }

    pub fn collection(items: IoSpec) -> Self {
        IoSpec { items: Some(Box::new(items)), ..IoSpec::of(DataType::Collection) }
    }

    pub fn referencing(mut self, target: &str) -> Self {
        self.reference_to = Some(target.to_string());
        self
    }

    pub fn with_classes<'a>(mut self, classes: impl IntoIterator<Item = &'a str>) -> Self {
        self.classes = Some(classes.into_iter().map(str::to_string).collect());
        self
    }

    /// True if this spec or any nested item spec is an annotation type.
    fn involves_annotations(&self) -> bool {
        self.data_type.is_annotation() || self.items.as_ref().is_some_and(|i| i.involves_annotations())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RefDirection {
    Inputs,
    Outputs,
}

/// A parsed `inputs.<key>` / `outputs.<key>` reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReferenceTarget {
    pub direction: RefDirection,
    pub key: String,
}

impl ReferenceTarget {
    pub fn parse(text: &str) -> Option<Self> {
        let (dir, key) = text.split_once('.')?;
        let direction = match dir {
            "inputs" => RefDirection::Inputs,
            "outputs" => RefDirection::Outputs,
            _ => return None,
        };
        is_segment(key).then(|| ReferenceTarget { direction, key: key.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppDescription {
    pub schema_version: String,
    pub namespace: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub modes: BTreeMap<Mode, ModeSpec>,
    pub io: BTreeMap<String, IoSpec>,
    #[serde(default)]
    pub classes: ClassTree,
}

/// Result of [`validate_ead`]: the parsed description (when it parsed) and
/// every violation found.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EadReport {
    pub violations: Vec<Violation>,
    #[serde(skip)]
    pub ead: Option<AppDescription>,
}

impl EadReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EadError {
    #[error("MALFORMED_DOCUMENT: {0}")]
    MalformedDocument(String),
    #[error("INVALID_EAD: {} violation(s), first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
}

impl EadError {
    pub fn code(&self) -> &'static str {
        match self {
            EadError::MalformedDocument(_) => "MALFORMED_DOCUMENT",
            EadError::Invalid(_) => "INVALID_EAD",
        }
    }
}

/// Validates an EAD document. Fails only when the text is not a structured
/// map; semantic problems come back as violations in the report.
pub fn validate_ead(document: &str) -> Result<EadReport, EadError> {
    let value: Value =
        serde_json::from_str(document).map_err(|e| EadError::MalformedDocument(e.to_string()))?;
    if !value.is_object() {
        return Err(EadError::MalformedDocument("document root is not a map".into()));
    }
    let ead: AppDescription = match serde_path_to_error::deserialize(&value) {
        Ok(ead) => ead,
        Err(err) => {
            let path = err.path().to_string();
            let violation = Violation::new(ViolationCode::SchemaViolation, path, err.into_inner().to_string());
            return Ok(EadReport { violations: vec![violation], ead: None });
        }
    };
    let violations = ead.check();
    Ok(EadReport { violations, ead: Some(ead) })
}

/// Returns `<namespace>.classes.<suffix>` for a suffix declared in the EAD.
pub fn qualify_class(ead: &AppDescription, suffix: &str) -> Result<String, Violation> {
    if !ead.classes.declares(suffix) {
        return Err(Violation::new(
            ViolationCode::UndeclaredClass,
            "classes",
            format!("class {suffix:?} is not declared by {}", ead.namespace),
        ));
    }
    Ok(format!("{}.classes.{suffix}", ead.namespace))
}

/// `<segment>(.<segment>)+.v<major>`
fn is_namespace(text: &str) -> bool {
    let segments: Vec<&str> = text.split('.').collect();
    let Some((last, rest)) = segments.split_last() else { return false };
    let version_ok = last
        .strip_prefix('v')
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
    version_ok && rest.len() >= 2 && rest.iter().all(|s| is_segment(s) && *s != "classes")
}

impl AppDescription {
    pub fn parse(document: &str) -> Result<Self, EadError> {
        let report = validate_ead(document)?;
        if !report.is_ok() {
            return Err(EadError::Invalid(report.violations));
        }
        Ok(report.ead.expect("ok report carries the description"))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("EAD serializes")
    }

    pub fn mode(&self, mode: Mode) -> Option<&ModeSpec> {
        self.modes.get(&mode)
    }

    /// Runs every semantic invariant and returns the violations found.
    pub fn check(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !matches!(self.schema_version.split('.').next(), Some("1")) {
            out.push(Violation::new(
                ViolationCode::UnsupportedSchemaVersion,
                "schema_version",
                format!("unsupported schema version {:?}", self.schema_version),
            ));
        }
        if !is_namespace(&self.namespace) {
            out.push(Violation::new(
                ViolationCode::InvalidNamespace,
                "namespace",
                format!("{:?} is not a dotted lowercase namespace ending in .v<major>", self.namespace),
            ));
        }
        self.check_classes(&self.classes, "classes", &mut out);
        for (key, spec) in &self.io {
            if !is_segment(key) {
                out.push(Violation::new(ViolationCode::InvalidKey, format!("io.{key}"), "io keys must match [a-z][a-z0-9_]*"));
            }
            self.check_spec(spec, &format!("io.{key}"), 1, &mut out);
        }
        self.check_modes(&mut out);
        self.check_reference_graph(&mut out);
        out
    }

    fn check_classes(&self, tree: &ClassTree, path: &str, out: &mut Vec<Violation>) {
        for (name, child) in &tree.0 {
            let child_path = format!("{path}.{name}");
            if !is_segment(name) {
                out.push(Violation::new(ViolationCode::InvalidClassName, &child_path, "class segments must match [a-z][a-z0-9_]*"));
            }
            self.check_classes(child, &child_path, out);
        }
    }

    fn check_spec(&self, spec: &IoSpec, path: &str, depth: usize, out: &mut Vec<Violation>) {
        match (&spec.items, spec.data_type) {
            (None, DataType::Collection) => {
                out.push(Violation::new(ViolationCode::MissingItems, format!("{path}.items"), "collections must declare an item spec"));
            }
            (Some(_), t) if t != DataType::Collection => {
                out.push(Violation::new(ViolationCode::UnexpectedItems, format!("{path}.items"), format!("type {t} takes no item spec")));
            }
            (Some(items), _) => {
                if items.data_type == DataType::Wsi {
                    out.push(Violation::new(ViolationCode::InvalidItemType, format!("{path}.items.type"), "collections cannot hold slides"));
                }
                if depth >= MAX_NESTING && items.data_type == DataType::Collection {
                    out.push(Violation::new(
                        ViolationCode::NestingTooDeep,
                        format!("{path}.items"),
                        format!("collections nest at most {MAX_NESTING} deep"),
                    ));
                } else {
                    self.check_spec(items, &format!("{path}.items"), depth + 1, out);
                }
            }
            _ => {}
        }
        if let Some(classes) = &spec.classes {
            if spec.data_type != DataType::Class {
                out.push(Violation::new(ViolationCode::UnexpectedClasses, format!("{path}.classes"), "only class-typed keys restrict classes"));
            }
            for (i, suffix) in classes.iter().enumerate() {
                let item_path = format!("{path}.classes[{i}]");
                if !suffix.split('.').all(is_segment) {
                    out.push(Violation::new(ViolationCode::InvalidClassName, item_path, format!("{suffix:?} is not a class suffix")));
                } else if !self.classes.declares(suffix) {
                    out.push(Violation::new(ViolationCode::UndeclaredClass, item_path, format!("{suffix:?} is not declared in classes")));
                }
            }
        }
        if let Some(reference) = &spec.reference_to {
            let ref_path = format!("{path}.reference_to");
            match ReferenceTarget::parse(reference) {
                None => out.push(Violation::new(
                    ViolationCode::BadReferenceFormat,
                    ref_path,
                    format!("{reference:?} is not inputs.<key> or outputs.<key>"),
                )),
                Some(target) if !self.declares_direction(&target) => out.push(Violation::new(
                    ViolationCode::DanglingReference,
                    ref_path,
                    format!("{reference:?} names no declared key"),
                )),
                Some(_) => {}
            }
        }
    }

    fn declares_direction(&self, target: &ReferenceTarget) -> bool {
        self.io.contains_key(&target.key)
            && self.modes.values().any(|m| match target.direction {
                RefDirection::Inputs => m.inputs.contains(&target.key),
                RefDirection::Outputs => m.outputs.contains(&target.key),
            })
    }

    fn check_modes(&self, out: &mut Vec<Violation>) {
        if self.modes.is_empty() {
            out.push(Violation::new(ViolationCode::NoModes, "modes", "at least one mode is required"));
        }
        for (mode, spec) in &self.modes {
            let base = format!("modes.{mode}");
            let mut seen = BTreeSet::new();
            for (section, keys) in [("inputs", &spec.inputs), ("outputs", &spec.outputs)] {
                for (i, key) in keys.iter().enumerate() {
                    let path = format!("{base}.{section}[{i}]");
                    if !seen.insert(key.as_str()) {
                        out.push(Violation::new(ViolationCode::DuplicateKey, path, format!("{key:?} listed twice")));
                        continue;
                    }
                    let Some(io) = self.io.get(key) else {
                        out.push(Violation::new(ViolationCode::UnknownKey, path, format!("{key:?} is not declared in io")));
                        continue;
                    };
                    if section == "outputs" && io.data_type == DataType::Wsi {
                        out.push(Violation::new(ViolationCode::WsiOutput, path.clone(), "apps cannot output slides"));
                    }
                    if *mode == Mode::Preprocessing && section == "inputs" && io.involves_annotations() {
                        out.push(Violation::new(
                            ViolationCode::PreprocessingAnnotationInput,
                            path,
                            format!("{key:?} needs user interaction, unavailable before viewing"),
                        ));
                    }
                    self.check_mode_references(*mode, spec, key, io, &format!("io.{key}"), out);
                }
            }
            let wsi_inputs = spec
                .inputs
                .iter()
                .filter(|k| self.io.get(*k).is_some_and(|s| s.data_type == DataType::Wsi))
                .count();
            match mode {
                Mode::Standalone if wsi_inputs == 0 => out.push(Violation::new(
                    ViolationCode::MissingWsiInput,
                    format!("{base}.inputs"),
                    "standalone mode needs at least one wsi input",
                )),
                Mode::Preprocessing if wsi_inputs != 1 => out.push(Violation::new(
                    ViolationCode::PreprocessingWsiCount,
                    format!("{base}.inputs"),
                    format!("preprocessing mode needs exactly one wsi input, found {wsi_inputs}"),
                )),
                _ => {}
            }
        }
    }

    /// A key used in a mode may only reference keys of that same mode.
    fn check_mode_references(&self, mode: Mode, spec: &ModeSpec, key: &str, io: &IoSpec, path: &str, out: &mut Vec<Violation>) {
        if let Some(target) = io.reference_to.as_deref().and_then(ReferenceTarget::parse) {
            let present = match target.direction {
                RefDirection::Inputs => spec.inputs.contains(&target.key),
                RefDirection::Outputs => spec.outputs.contains(&target.key),
            };
            if !present && self.declares_direction(&target) {
                out.push(Violation::new(
                    ViolationCode::ReferenceOutsideMode,
                    format!("{path}.reference_to"),
                    format!("{key:?} is used in {mode} mode but its reference target is not"),
                ));
            }
        }
        if let Some(items) = &io.items {
            self.check_mode_references(mode, spec, key, items, &format!("{path}.items"), out);
        }
    }

    fn check_reference_graph(&self, out: &mut Vec<Violation>) {
        let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (key, spec) in &self.io {
            let mut node = Some(spec);
            while let Some(s) = node {
                if let Some(target) = s.reference_to.as_deref().and_then(ReferenceTarget::parse) {
                    if let Some((k, _)) = self.io.get_key_value(&target.key) {
                        edges.entry(key.as_str()).or_default().insert(k.as_str());
                    }
                }
                node = s.items.as_deref();
            }
        }
        // Depth-first search with colors; report each key that closes a cycle once.
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            White,
            Grey,
            Black,
        }
        fn visit<'a>(
            node: &'a str,
            edges: &BTreeMap<&'a str, BTreeSet<&'a str>>,
            color: &mut BTreeMap<&'a str, Color>,
            cyclic: &mut BTreeSet<&'a str>,
        ) {
            color.insert(node, Color::Grey);
            for next in edges.get(node).into_iter().flatten() {
                match color.get(next).copied().unwrap_or(Color::White) {
                    Color::Grey => {
                        cyclic.insert(node);
                    }
                    Color::White => visit(next, edges, color, cyclic),
                    Color::Black => {}
                }
            }
            color.insert(node, Color::Black);
        }
        let mut color = BTreeMap::new();
        let mut cyclic = BTreeSet::new();
        for key in self.io.keys() {
            if color.get(key.as_str()).copied().unwrap_or(Color::White) == Color::White {
                visit(key, &edges, &mut color, &mut cyclic);
            }
        }
        for key in cyclic {
            out.push(Violation::new(
                ViolationCode::ReferenceCycle,
                format!("io.{key}.reference_to"),
                "references form a cycle",
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "schema_version": "1",
            "namespace": "org.acme.tpsdemo.v1",
            "name": "TPS demo",
            "modes": {"standalone": {"inputs": ["slide", "roi"], "outputs": ["my_cells"]}},
            "io": {
                "slide": {"type": "wsi"},
                "roi": {"type": "rectangle", "reference_to": "inputs.slide"},
                "my_cells": {"type": "collection", "items": {"type": "point"}, "reference_to": "inputs.roi"}
            },
            "classes": {"tumor": {"positive": {}, "negative": {}}, "roi": {}}
        })
    }

    fn report(v: &Value) -> EadReport {
        validate_ead(&v.to_string()).unwrap()
    }

    #[test]
    fn minimal_ead_is_ok() {
        let r = report(&minimal());
        assert!(r.is_ok(), "{:?}", r.violations);
    }

    #[test]
    fn dangling_reference() {
        let mut v = minimal();
        v["io"]["my_cells"]["reference_to"] = json!("inputs.missing_key");
        let r = report(&v);
        assert_eq!(r.violations.len(), 1, "{:?}", r.violations);
        assert_eq!(r.violations[0].code, ViolationCode::DanglingReference);
        assert_eq!(r.violations[0].path, "io.my_cells.reference_to");
    }

    #[test]
    fn preprocessing_with_annotation_input() {
        let mut v = minimal();
        v["modes"]["preprocessing"] = json!({"inputs": ["slide", "roi"], "outputs": []});
        let r = report(&v);
        assert!(r.has(ViolationCode::PreprocessingAnnotationInput), "{:?}", r.violations);
        assert_eq!(r.violations[0].path, "modes.preprocessing.inputs[1]");
    }

    #[test]
    fn preprocessing_needs_exactly_one_wsi() {
        let mut v = minimal();
        v["io"]["other"] = json!({"type": "wsi"});
        v["modes"]["preprocessing"] = json!({"inputs": ["slide", "other"], "outputs": []});
        assert!(report(&v).has(ViolationCode::PreprocessingWsiCount));
        v["modes"]["preprocessing"] = json!({"inputs": [], "outputs": []});
        assert!(report(&v).has(ViolationCode::PreprocessingWsiCount));
    }

    #[test]
    fn standalone_needs_wsi() {
        let mut v = minimal();
        v["modes"]["standalone"]["inputs"] = json!([]);
        v["io"]["roi"]["reference_to"] = Value::Null;
        let r = report(&v);
        assert!(r.has(ViolationCode::MissingWsiInput), "{:?}", r.violations);
    }

    #[test]
    fn cycles_are_detected() {
        let v = json!({
            "schema_version": "1",
            "namespace": "org.acme.cyc.v1",
            "name": "c",
            "modes": {"standalone": {"inputs": ["slide"], "outputs": ["a", "b"]}},
            "io": {
                "slide": {"type": "wsi"},
                "a": {"type": "integer", "reference_to": "outputs.b"},
                "b": {"type": "integer", "reference_to": "outputs.a"}
            }
        });
        let r = report(&v);
        assert!(r.has(ViolationCode::ReferenceCycle), "{:?}", r.violations);
    }

    #[test]
    fn schema_errors_carry_paths() {
        let mut v = minimal();
        v["io"]["roi"]["type"] = json!("hexagon");
        let r = report(&v);
        assert_eq!(r.violations[0].code, ViolationCode::SchemaViolation);
        assert_eq!(r.violations[0].path, "io.roi.type");
    }

    #[test]
    fn malformed_documents_fail() {
        assert!(matches!(validate_ead("{not json"), Err(EadError::MalformedDocument(_))));
        assert!(matches!(validate_ead("[1,2]"), Err(EadError::MalformedDocument(_))));
    }

    #[test]
    fn namespace_grammar() {
        assert!(is_namespace("org.acme.tpsdemo.v1"));
        assert!(is_namespace("org.acme.v12"));
        assert!(!is_namespace("org.v1"));
        assert!(!is_namespace("org.acme.tpsdemo"));
        assert!(!is_namespace("org.Acme.x.v1"));
        assert!(!is_namespace("org.acme.x.v"));
    }

    #[test]
    fn nesting_and_items() {
        let mut v = minimal();
        v["io"]["my_cells"]["items"] = json!({"type": "collection", "items": {"type": "collection", "items": {"type": "collection", "items": {"type": "point"}}}});
        assert!(report(&v).has(ViolationCode::NestingTooDeep));
        v["io"]["my_cells"]["items"] = json!({"type": "collection", "items": {"type": "collection", "items": {"type": "point"}}});
        assert!(report(&v).is_ok());
        v["io"]["my_cells"] = json!({"type": "collection"});
        assert!(report(&v).has(ViolationCode::MissingItems));
    }

    #[test]
    fn class_restrictions() {
        let mut v = minimal();
        v["io"]["labels"] = json!({"type": "class", "classes": ["tumor.positive", "stroma"]});
        v["modes"]["standalone"]["outputs"] = json!(["my_cells", "labels"]);
        let r = report(&v);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].code, ViolationCode::UndeclaredClass);
        assert_eq!(r.violations[0].path, "io.labels.classes[1]");
    }

    #[test]
    fn qualify() {
        let ead: AppDescription = serde_json::from_value(minimal()).unwrap();
        assert_eq!(qualify_class(&ead, "tumor.positive").unwrap(), "org.acme.tpsdemo.v1.classes.tumor.positive");
        assert_eq!(qualify_class(&ead, "roi").unwrap(), "org.acme.tpsdemo.v1.classes.roi");
        assert_eq!(qualify_class(&ead, "stroma").unwrap_err().code, ViolationCode::UndeclaredClass);
    }

    #[test]
    fn validation_is_pure() {
        let text = minimal().to_string();
        assert_eq!(validate_ead(&text).unwrap(), validate_ead(&text).unwrap());
    }
}
