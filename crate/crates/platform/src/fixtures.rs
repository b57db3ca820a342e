// SPDX-License-Identifier: Apache-2.0

//! Reference fixture apps and their bundles.
//!
//! All fixtures run from one executable (`pathharbor-fixture <name>`) and
//! talk to the platform only through the launch environment. Each `broken-*`
//! mutant breaks exactly one contract rule and otherwise behaves like
//! `tps-counter`.

use std::fs;
use std::path::{Path, PathBuf};

use pathharbor_core::detect::{detect_cells, Detections};
use pathharbor_core::model::SlideInfo;
use pathharbor_core::Id;
use serde_json::{json, Value};

use crate::client::AppContext;
use crate::error::ApiError;
use crate::executor::ExecutorSpec;
use crate::random_id;

pub const TPS_NAMESPACE: &str = "org.acme.tpsdemo.v1";
pub const NOOP_NAMESPACE: &str = "org.pathharbor.noop.v1";

/// Every shipped fixture, in report order.
pub const FIXTURES: &[&str] = &[
    "noop",
    "tps-counter",
    "broken-missing-output",
    "broken-wrong-type",
    "broken-out-of-bounds",
    "broken-undeclared-class",
    "broken-bad-reference",
    "broken-scope-escape",
    "broken-no-finalize",
    "broken-ignores-failure",
    "broken-nondeterministic",
];

/// The check each mutant is built to fail.
pub fn targeted_check(name: &str) -> Option<&'static str> {
    Some(match name {
        "broken-missing-output" => "MISSING_OUTPUT",
        "broken-wrong-type" => "TYPE_MISMATCH",
        "broken-out-of-bounds" => "OUT_OF_BOUNDS",
        "broken-undeclared-class" => "UNDECLARED_CLASS",
        "broken-bad-reference" => "BAD_REFERENCE",
        "broken-scope-escape" => "UNAUTHORIZED_ACCESS",
        "broken-no-finalize" => "FINALIZE",
        "broken-ignores-failure" => "FAILURE_REPORTING",
        "broken-nondeterministic" => "IDEMPOTENT_RERUN",
        _ => return None,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("UNKNOWN_FIXTURE: {0}")]
    UnknownFixture(String),
    #[error("cannot write bundle: {0}")]
    Io(#[from] std::io::Error),
}

pub fn noop_ead() -> Value {
    json!({
        "schema_version": "1.0",
        "namespace": NOOP_NAMESPACE,
        "name": "noop",
        "description": "Reads one tile and reports a heartbeat.",
        "modes": {
            "standalone": {"inputs": ["slide"], "outputs": ["heartbeat"]},
            "preprocessing": {"inputs": ["slide"], "outputs": ["heartbeat"]}
        },
        "io": {
            "slide": {"type": "wsi"},
            "heartbeat": {"type": "integer"}
        }
    })
}

/// EAD of the TPS counter under `namespace`.
pub fn tps_ead(namespace: &str) -> Value {
    json!({
        "schema_version": "1.0",
        "namespace": namespace,
        "name": "TPS counter",
        "description": "Counts positive and negative tumor cells in a rectangle and reports the TPS.",
        "modes": {
            "standalone": {
                "inputs": ["slide", "roi"],
                "outputs": ["positive_cells", "negative_cells", "positive_classes", "negative_classes", "tps_score"]
            }
        },
        "io": {
            "slide": {"type": "wsi"},
            "roi": {"type": "rectangle", "reference_to": "inputs.slide"},
            "positive_cells": {"type": "collection", "items": {"type": "point"}, "reference_to": "inputs.roi"},
            "negative_cells": {"type": "collection", "items": {"type": "point"}, "reference_to": "inputs.roi"},
            "positive_classes": {
                "type": "collection",
                "items": {"type": "class", "classes": ["tumor.positive"], "reference_to": "outputs.positive_cells"}
            },
            "negative_classes": {
                "type": "collection",
                "items": {"type": "class", "classes": ["tumor.negative"], "reference_to": "outputs.negative_cells"}
            },
            "tps_score": {"type": "float", "reference_to": "inputs.roi"}
        },
        "classes": {"tumor": {"positive": {}, "negative": {}}}
    })
}

pub fn fixture_ead(name: &str) -> Option<Value> {
    match name {
        "noop" => Some(noop_ead()),
        n if FIXTURES.contains(&n) => {
            let ns = if n == "tps-counter" {
                TPS_NAMESPACE.to_string()
            } else {
                format!("org.acme.{}.v1", n.replace('-', "_"))
            };
            Some(tps_ead(&ns))
        }
        _ => None,
    }
}

/// Writes `ead.json` and `run.toml` for a fixture into `out`.
pub fn package_fixture(name: &str, exe: &Path, out: &Path) -> Result<PathBuf, FixtureError> {
    let ead = fixture_ead(name).ok_or_else(|| FixtureError::UnknownFixture(name.to_string()))?;
    write_bundle(out, &ead, &ExecutorSpec { timeout_s: Some(60), ..ExecutorSpec::process(exe.display().to_string(), &[name]) })
}

pub fn write_bundle(out: &Path, ead: &Value, executor: &ExecutorSpec) -> Result<PathBuf, FixtureError> {
    fs::create_dir_all(out)?;
    fs::write(out.join("ead.json"), serde_json::to_string_pretty(ead).expect("json"))?;
    fs::write(out.join("run.toml"), toml::to_string(executor).map_err(std::io::Error::other)?)?;
    Ok(out.to_path_buf())
}

// ---- app side ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flaw {
    None,
    MissingOutput,
    WrongType,
    OutOfBounds,
    UndeclaredClass,
    BadReference,
    ScopeEscape,
    NoFinalize,
    IgnoresFailure,
    Nondeterministic,
}

fn flaw(name: &str) -> Option<Flaw> {
    Some(match name {
        "tps-counter" => Flaw::None,
        "broken-missing-output" => Flaw::MissingOutput,
        "broken-wrong-type" => Flaw::WrongType,
        "broken-out-of-bounds" => Flaw::OutOfBounds,
        "broken-undeclared-class" => Flaw::UndeclaredClass,
        "broken-bad-reference" => Flaw::BadReference,
        "broken-scope-escape" => Flaw::ScopeEscape,
        "broken-no-finalize" => Flaw::NoFinalize,
        "broken-ignores-failure" => Flaw::IgnoresFailure,
        "broken-nondeterministic" => Flaw::Nondeterministic,
        _ => return None,
    })
}

/// Entry point of the fixture executable. `namespace` overrides the class
/// namespace the fixture emits (needed when its EAD was re-namespaced).
/// Returns the process exit code.
pub fn run_fixture(name: &str, bias: f64, namespace: Option<&str>) -> i32 {
    let ctx = match AppContext::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{name}: {e}");
            return 2;
        }
    };
    let result = match name {
        "noop" => run_noop(&ctx),
        n => match flaw(n) {
            Some(f) => {
                let ns = namespace.map(str::to_string).unwrap_or_else(|| {
                    fixture_ead(n).and_then(|e| e["namespace"].as_str().map(str::to_string)).unwrap_or_default()
                });
                run_tps(&ctx, f, bias, &ns)
            }
            None => {
                eprintln!("UNKNOWN_FIXTURE: {n}");
                return 2;
            }
        },
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{name}: {e}");
            1
        }
    }
}

fn slide_of(doc: &Value) -> Result<Id, ApiError> {
    doc.get("id")
        .and_then(Value::as_str)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ApiError::internal("wsi input carries no id"))
}

fn run_noop(ctx: &AppContext) -> Result<(), ApiError> {
    let slide = slide_of(&ctx.input("slide")?)?;
    if let Err(e) = ctx.platform.tile(slide, 0, 0, 0) {
        ctx.fail(&format!("cannot read slide: {}", e.code.as_str()))?;
        return Err(e);
    }
    ctx.post_output("heartbeat", &json!({"type": "integer", "value": 1}))?;
    ctx.finalize()?;
    Ok(())
}

fn points(cells: &[[i64; 2]], slide: Id, npp: f64) -> Vec<Value> {
    cells
        .iter()
        .map(|c| json!({"type": "point", "coordinates": c, "npp_created": npp, "reference": slide}))
        .collect()
}

/// Class values for the point ids of a stored collection; empty when the
/// collection was rejected.
fn class_items(stored: Option<&Value>, class: &str) -> Vec<Value> {
    let Some(items) = stored.and_then(|s| s.get("items")).and_then(Value::as_array) else {
        return Vec::new();
    };
    items
        .iter()
        .filter_map(|p| p.get("id").cloned())
        .map(|id| json!({"type": "class", "value": class, "reference": id}))
        .collect()
}

fn run_tps(ctx: &AppContext, flaw: Flaw, bias: f64, ns: &str) -> Result<(), ApiError> {
    let slide_doc = ctx.input("slide")?;
    let slide = slide_of(&slide_doc)?;
    let info: SlideInfo = serde_json::from_value(slide_doc).map_err(ApiError::internal)?;
    let roi = ctx.input("roi")?;
    let roi_id = roi.get("id").cloned().unwrap_or(Value::Null);
    let num = |v: &Value| v.as_i64().unwrap_or(0);
    let (x, y) = (num(&roi["upper_left"][0]), num(&roi["upper_left"][1]));
    let (w, h) = (num(&roi["width"]).max(1) as u32, num(&roi["height"]).max(1) as u32);

    if flaw == Flaw::ScopeEscape {
        // Probe a slide that belongs to nobody's job.
        if let Ok(all) = ctx.platform.slides() {
            if let Some(other) = all.iter().find(|s| s.slide_id != slide) {
                let _ = ctx.platform.tile(other.slide_id, 0, 0, 0);
            }
        }
    }

    let region = match ctx.platform.region(slide, 0, x, y, w, h) {
        Ok(r) => r,
        Err(e) => {
            if flaw != Flaw::IgnoresFailure {
                ctx.fail(&format!("cannot read slide region: {}", e.code.as_str()))?;
            }
            return Err(e);
        }
    };
    let Detections { mut positive, negative } = detect_cells(&region, [x, y]);
    let total = positive.len() + negative.len();
    if total == 0 {
        ctx.fail("NO_TUMOR_CELLS: no tumor cells in the region")?;
        return Err(ApiError::internal("no tumor cells"));
    }
    let tps = 100.0 * positive.len() as f64 / total as f64;
    if flaw == Flaw::OutOfBounds {
        positive.push([info.width_base as i64 + 50, 10]);
    }
    let npp = info.pixel_size_nm as f64;

    let post = |key: &str, body: Value| -> Option<Value> {
        match ctx.post_output(key, &body) {
            Ok(v) => Some(v),
            Err(e) => {
                eprintln!("{key} rejected: {e}");
                None
            }
        }
    };
    let pos = post(
        "positive_cells",
        json!({"type": "collection", "item_type": "point", "items": points(&positive, slide, npp), "reference": roi_id}),
    );
    let neg = post(
        "negative_cells",
        json!({"type": "collection", "item_type": "point", "items": points(&negative, slide, npp), "reference": roi_id}),
    );
    let positive_class = if flaw == Flaw::UndeclaredClass {
        format!("{ns}.classes.tumor.mitotic")
    } else {
        format!("{ns}.classes.tumor.positive")
    };
    post(
        "positive_classes",
        json!({"type": "collection", "item_type": "class", "items": class_items(pos.as_ref(), &positive_class)}),
    );
    post(
        "negative_classes",
        json!({"type": "collection", "item_type": "class", "items": class_items(neg.as_ref(), &format!("{ns}.classes.tumor.negative"))}),
    );
    let mut score = tps + bias;
    if flaw == Flaw::Nondeterministic {
        let b = random_id().as_bytes()[..8].try_into().expect("8 bytes");
        score += (u64::from_le_bytes(b) >> 11) as f64 / (1u64 << 53) as f64 + 0.001;
    }
    match flaw {
        Flaw::MissingOutput => {}
        Flaw::WrongType => {
            post("tps_score", json!({"type": "integer", "value": score.round() as i64, "reference": roi_id}));
        }
        Flaw::BadReference => {
            post("tps_score", json!({"type": "float", "value": score, "reference": random_id()}));
        }
        _ => {
            post("tps_score", json!({"type": "float", "value": score, "reference": roi_id}));
        }
    }
    if flaw != Flaw::NoFinalize {
        ctx.finalize()?;
    }
    Ok(())
}
