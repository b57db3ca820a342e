// SPDX-License-Identifier: Apache-2.0

//! App test suite: runs a candidate bundle against an in-process platform
//! on loopback with seeded fixture slides and reports one verdict per check.
//!
//! Check order is fixed. After EAD_VALID, REGISTRATION, JOB_ASSEMBLY or
//! APP_LAUNCH fails, the remaining checks are skipped. Three jobs are run:
//! the primary job, an identical rerun, and a job over a slide whose tile
//! data was truncated after registration.
//!
//! Report details never contain ids or timestamps, so equal bundles and
//! seeds give equal reports.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use pathharbor_core::model::{validate_ead, AppDescription, DataType, IoSpec, Mode, ReferenceTarget, SlideInfo};
use pathharbor_core::slide::synth::SyntheticSpec;
use pathharbor_core::slide::HEADER_LEN;
use pathharbor_core::Id;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Config;
use crate::error::{ApiError, ErrorCode};
use crate::executor::ExecutorSpec;
use crate::orchestrator::{FailureSource, Job, JobStatus, Orchestrator};
use crate::platform::Platform;

pub const SUITE_VERSION: &str = "1";
pub const REPORT_VERSION: &str = "1";
/// Per-job limit when the bundle sets none.
pub const DEFAULT_JOB_TIMEOUT_S: u64 = 60;

pub const CHECKS: [&str; 13] = [
    "EAD_VALID",
    "REGISTRATION",
    "JOB_ASSEMBLY",
    "APP_LAUNCH",
    "MISSING_OUTPUT",
    "TYPE_MISMATCH",
    "BAD_REFERENCE",
    "OUT_OF_BOUNDS",
    "UNDECLARED_CLASS",
    "FINALIZE",
    "UNAUTHORIZED_ACCESS",
    "IDEMPOTENT_RERUN",
    "FAILURE_REPORTING",
];

/// Rejection codes attributed to each payload check.
const PAYLOAD_CHECKS: &[(&str, &[ErrorCode])] = &[
    (
        "TYPE_MISMATCH",
        &[
            ErrorCode::TypeMismatch,
            ErrorCode::HeterogeneousCollection,
            ErrorCode::UnknownKey,
            ErrorCode::AlreadyPosted,
            ErrorCode::DuplicateId,
        ],
    ),
    ("BAD_REFERENCE", &[ErrorCode::BadReference]),
    ("OUT_OF_BOUNDS", &[ErrorCode::OutOfBounds, ErrorCode::DegenerateShape]),
    ("UNDECLARED_CLASS", &[ErrorCode::UndeclaredClass]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check_id: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub fixture_seed: u64,
    pub suite_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub report_version: String,
    pub namespace: Option<String>,
    pub checks: Vec<CheckResult>,
    pub overall: Verdict,
    pub environment: Environment,
}

impl ComplianceReport {
    pub fn passed(&self) -> bool {
        self.overall == Verdict::Pass
    }

    pub fn verdict(&self, check: &str) -> Option<Verdict> {
        self.checks.iter().find(|c| c.check_id == check).map(|c| c.verdict)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.verdict == Verdict::Fail).map(|c| c.check_id.as_str()).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ComplianceError {
    #[error("BUNDLE_UNREADABLE: {0}")]
    BundleUnreadable(String),
    #[error("suite environment failed: {0}")]
    Environment(String),
}

/// An app bundle: `ead.json` plus `run.toml`.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub ead_text: String,
    pub executor: ExecutorSpec,
}

impl Bundle {
    pub fn load(dir: &Path) -> Result<Self, ComplianceError> {
        let unreadable = |what: &str, e: &dyn std::fmt::Display| {
            ComplianceError::BundleUnreadable(format!("{what}: {e}"))
        };
        let ead_text = std::fs::read_to_string(dir.join("ead.json")).map_err(|e| unreadable("ead.json", &e))?;
        let run = std::fs::read_to_string(dir.join("run.toml")).map_err(|e| unreadable("run.toml", &e))?;
        let mut executor: ExecutorSpec = toml::from_str(&run).map_err(|e| unreadable("run.toml", &e))?;
        // Relative commands with a path component are relative to the bundle.
        let cmd = Path::new(&executor.command);
        if cmd.is_relative() && cmd.components().count() > 1 {
            executor.command = dir.join(cmd).display().to_string();
        }
        Ok(Bundle { dir: dir.to_path_buf(), ead_text, executor })
    }
}

struct Report {
    checks: Vec<CheckResult>,
}

impl Report {
    fn record(&mut self, id: &str, verdict: Verdict, detail: impl Into<String>) {
        self.checks.push(CheckResult { check_id: id.to_string(), verdict, detail: detail.into() });
    }

    fn pass(&mut self, id: &str, detail: impl Into<String>) {
        self.record(id, Verdict::Pass, detail);
    }

    fn fail(&mut self, id: &str, detail: impl Into<String>) {
        self.record(id, Verdict::Fail, detail);
    }

    fn skip_rest(&mut self, after: &str) {
        for id in CHECKS.iter().skip(self.checks.len()) {
            self.record(id, Verdict::Skip, format!("skipped after {after} failed"));
        }
    }
}

/// Fixture slides of one suite run.
struct Fixtures {
    primary: SlideInfo,
    other: SlideInfo,
    corrupt: SlideInfo,
}

impl Fixtures {
    fn labels(&self) -> HashMap<String, &'static str> {
        HashMap::from([
            (self.primary.slide_id.to_string(), "<fixture slide>"),
            (self.other.slide_id.to_string(), "<unbound slide>"),
            (self.corrupt.slide_id.to_string(), "<corrupt slide>"),
        ])
    }
}

fn seed_fixtures(platform: &Platform, seed: u64) -> Result<Fixtures, ApiError> {
    let slides = &platform.slides;
    // ids follow the seed so apps that walk the slide list behave the same
    // on every run
    let id = |n: u8| Id::derive(&[b"ats-fixture", &seed.to_le_bytes(), &[n]]);
    let (primary, _) = slides.generate_with_id(seed, &SyntheticSpec::new(1024, 768, 12, 18), id(0))?;
    let (other, _) = slides.generate_with_id(seed.wrapping_add(1), &SyntheticSpec::new(512, 512, 4, 4), id(1))?;
    let (corrupt, _) = slides.generate_with_id(seed.wrapping_add(2), &SyntheticSpec::new(512, 512, 4, 4), id(2))?;
    let entry = slides.get(corrupt.slide_id).expect("just registered");
    truncate_tiles(&entry.path, &corrupt)?;
    Ok(Fixtures { primary, other, corrupt })
}

/// Cuts a container right after its index so every tile read fails while
/// the already-registered geometry stays valid.
pub fn truncate_tiles(path: &Path, info: &SlideInfo) -> std::io::Result<()> {
    let mut len = HEADER_LEN as u64;
    for level in 0..info.num_levels {
        let (c, r) = info.grid(level).expect("level in range");
        len += 8 + u64::from(c) * u64::from(r) * 16;
    }
    std::fs::OpenOptions::new().write(true).open(path)?.set_len(len)
}

/// Runs every check against `bundle`.
pub fn run_compliance(bundle: &Bundle, seed: u64) -> Result<ComplianceReport, ComplianceError> {
    let mut report = Report { checks: Vec::new() };
    let environment = Environment { fixture_seed: seed, suite_version: SUITE_VERSION.into() };
    let finish = |report: Report, namespace: Option<String>| {
        let overall = if report.checks.iter().any(|c| c.verdict == Verdict::Fail) { Verdict::Fail } else { Verdict::Pass };
        ComplianceReport {
            report_version: REPORT_VERSION.into(),
            namespace,
            checks: report.checks,
            overall,
            environment: environment.clone(),
        }
    };

    // EAD_VALID
    let ead = match validate_ead(&bundle.ead_text) {
        Err(e) => {
            report.fail("EAD_VALID", e.to_string());
            report.skip_rest("EAD_VALID");
            return Ok(finish(report, None));
        }
        Ok(r) if !r.is_ok() => {
            let list: Vec<String> = r.violations.iter().map(|v| format!("{} at {}", v.code.as_str(), v.path)).collect();
            report.fail("EAD_VALID", list.join("; "));
            report.skip_rest("EAD_VALID");
            return Ok(finish(report, r.ead.map(|e| e.namespace)));
        }
        Ok(r) => r.ead.expect("ok report carries the description"),
    };
    report.pass("EAD_VALID", "no violations");
    let namespace = Some(ead.namespace.clone());

    let dir = tempfile::tempdir().map_err(|e| ComplianceError::Environment(e.to_string()))?;
    let config = Config {
        fsync: false,
        workers: 3,
        default_timeout_s: DEFAULT_JOB_TIMEOUT_S,
        ..Config::for_data_dir(dir.path())
    };
    let env_err = |e: &dyn std::fmt::Display| ComplianceError::Environment(e.to_string());
    let platform = Platform::open(config).map_err(|e| env_err(&e))?;
    let _server = platform.start().map_err(|e| env_err(&e))?;
    let fixtures = seed_fixtures(&platform, seed).map_err(|e| env_err(&e))?;
    let orch = platform.orchestrator.clone();

    // REGISTRATION
    let app = match orch.register_app(&bundle.ead_text, bundle.executor.clone()) {
        Ok(a) => a,
        Err(e) => {
            report.fail("REGISTRATION", format!("{}: {}", e.code.as_str(), e.message));
            report.skip_rest("REGISTRATION");
            return Ok(finish(report, namespace));
        }
    };
    report.pass("REGISTRATION", "app registered");

    // JOB_ASSEMBLY
    let mode = if ead.mode(Mode::Standalone).is_some() { Mode::Standalone } else { Mode::Preprocessing };
    let assemble_on = |slide: &SlideInfo| -> Result<Job, String> {
        let (job, _) = orch.create_job(app.app_id, mode).map_err(|e| format!("create job: {}", e.code.as_str()))?;
        assemble(&orch, &ead, mode, job.job_id, slide)
    };
    let jobs: Result<Vec<Job>, String> =
        [&fixtures.primary, &fixtures.primary, &fixtures.corrupt].into_iter().map(|s| assemble_on(s)).collect();
    let jobs = match jobs {
        Ok(j) => j,
        Err(e) => {
            report.fail("JOB_ASSEMBLY", e);
            report.skip_rest("JOB_ASSEMBLY");
            return Ok(finish(report, namespace));
        }
    };
    report.pass("JOB_ASSEMBLY", format!("{mode} job assembled with fixture inputs"));

    // APP_LAUNCH
    for j in &jobs {
        if let Err(e) = orch.start_job(j.job_id) {
            report.fail("APP_LAUNCH", format!("{}: {}", e.code.as_str(), e.message));
            report.skip_rest("APP_LAUNCH");
            return Ok(finish(report, namespace));
        }
    }
    let limit = Duration::from_secs(bundle.executor.timeout_s.unwrap_or(DEFAULT_JOB_TIMEOUT_S) + 10);
    let done: Vec<Job> = jobs.iter().map(|j| orch.wait_terminal(j.job_id, limit).expect("job exists")).collect();
    if let Some(j) = done.iter().find(|j| j.failure_source == Some(FailureSource::Launch)) {
        report.fail("APP_LAUNCH", j.failure_message.clone().unwrap_or_default());
        report.skip_rest("APP_LAUNCH");
        return Ok(finish(report, namespace));
    }
    report.pass("APP_LAUNCH", "app started under the launch contract");

    let (main, rerun, broken) = (&done[0], &done[1], &done[2]);
    let activity = orch.activity(main.job_id);
    let spec = ead.mode(mode).expect("mode exists");

    // MISSING_OUTPUT
    let missing: Vec<&String> =
        spec.outputs.iter().filter(|k| !activity.output_attempts.iter().any(|(a, _)| a == *k)).collect();
    if missing.is_empty() {
        report.pass("MISSING_OUTPUT", "every declared output was posted");
    } else {
        let names: Vec<&str> = missing.iter().map(|s| s.as_str()).collect();
        report.fail("MISSING_OUTPUT", format!("never posted: {}", names.join(", ")));
    }

    // payload checks
    for (check, codes) in PAYLOAD_CHECKS {
        let hits: Vec<String> = activity
            .output_attempts
            .iter()
            .filter_map(|(key, code)| code.filter(|c| codes.contains(c)).map(|c| format!("{key}: {}", c.as_str())))
            .collect();
        if hits.is_empty() {
            report.pass(check, "no rejected posts");
        } else {
            report.fail(check, format!("rejected posts: {}", hits.join(", ")));
        }
    }

    // FINALIZE
    match main.status {
        JobStatus::Timeout => report.fail("FINALIZE", "job timed out"),
        _ if activity.finalize_attempts.is_empty() => {
            report.fail("FINALIZE", format!("app ended without finalizing (job {:?})", main.status))
        }
        _ => report.pass("FINALIZE", format!("finalize called, job {:?}", main.status)),
    }

    // UNAUTHORIZED_ACCESS
    let labels = fixtures.labels();
    let ours: Vec<Id> = done.iter().map(|j| j.job_id).collect();
    let mut denials: Vec<String> = orch
        .audit_log()
        .iter()
        .filter(|d| d.job_id.is_some_and(|j| ours.contains(&j)))
        .map(|d| {
            let mut r = d.resource.clone();
            for (id, label) in &labels {
                r = r.replace(id, label);
            }
            format!("{r} ({})", d.reason)
        })
        .collect();
    denials.sort();
    denials.dedup();
    if denials.is_empty() {
        report.pass("UNAUTHORIZED_ACCESS", "no denied requests");
    } else {
        report.fail("UNAUTHORIZED_ACCESS", format!("denied: {}", denials.join("; ")));
    }

    // IDEMPOTENT_RERUN
    let (a, b) = (canonical_outputs(&orch, main), canonical_outputs(&orch, rerun));
    if rerun.status != main.status {
        report.fail("IDEMPOTENT_RERUN", format!("rerun ended {:?}, first run {:?}", rerun.status, main.status));
    } else if a == b {
        report.pass("IDEMPOTENT_RERUN", format!("{} output(s) equal up to ids", a.len()));
    } else {
        let differing: Vec<&str> = a
            .keys()
            .chain(b.keys())
            .filter(|k| a.get(*k) != b.get(*k))
            .map(|k| k.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        report.fail("IDEMPOTENT_RERUN", format!("outputs differ: {}", differing.join(", ")));
    }

    // FAILURE_REPORTING
    let broken_activity = orch.activity(broken.job_id);
    if broken.failure_source == Some(FailureSource::App) && !broken_activity.failure_reports.is_empty() {
        report.pass("FAILURE_REPORTING", "failure endpoint called for the corrupt slide");
    } else {
        report.fail(
            "FAILURE_REPORTING",
            format!("corrupt slide job ended {:?} without a failure report", broken.status),
        );
    }

    Ok(finish(report, namespace))
}

/// Binds synthetic values for every input of `mode`, slide first, then
/// keys whose references are already bound.
pub fn assemble(orch: &Orchestrator, ead: &AppDescription, mode: Mode, job_id: Id, slide: &SlideInfo) -> Result<Job, String> {
    let spec = ead.mode(mode).ok_or("mode missing")?;
    let mut pending: Vec<&String> = spec.inputs.iter().collect();
    let mut job = orch.job(job_id).ok_or("job vanished")?;
    while !pending.is_empty() {
        let before = pending.len();
        let mut i = 0;
        while i < pending.len() {
            let key = pending[i];
            let io = &ead.io[key];
            match synthesize(ead, io, &job, slide) {
                Some(body) => {
                    job = orch
                        .bind_input(job_id, key, &body)
                        .map_err(|e| format!("binding {key}: {}: {}", e.code.as_str(), e.message))?;
                    pending.remove(i);
                }
                None => i += 1,
            }
        }
        if pending.len() == before {
            let keys: Vec<&str> = pending.iter().map(|s| s.as_str()).collect();
            return Err(format!("cannot synthesize inputs: {}", keys.join(", ")));
        }
    }
    if job.status != JobStatus::Ready {
        return Err(format!("job is {:?} after binding every input", job.status));
    }
    Ok(job)
}

/// A value for `io`, or `None` while its reference target is unbound.
fn synthesize(ead: &AppDescription, io: &IoSpec, job: &Job, slide: &SlideInfo) -> Option<Value> {
    let reference = match io.reference_to.as_deref().and_then(ReferenceTarget::parse) {
        Some(t) => Some(json!(*job.inputs.get(&t.key)?)),
        None if io.data_type.is_annotation() => Some(json!(slide.slide_id)),
        None => None,
    };
    let (w, h) = (slide.width_base as i64, slide.height_base as i64);
    let npp = slide.pixel_size_nm as f64;
    let mut v = match io.data_type {
        DataType::Wsi => return Some(json!({"type": "wsi", "id": slide.slide_id})),
        DataType::Point => json!({"type": "point", "coordinates": [w / 2, h / 2]}),
        DataType::Line => json!({"type": "line", "coordinates": [[0, 0], [w, h]]}),
        DataType::Arrow => json!({"type": "arrow", "coordinates": [[0, 0], [w / 2, h / 2]]}),
        DataType::Polygon => json!({"type": "polygon", "coordinates": [[0, 0], [w, 0], [w, h], [0, h]]}),
        DataType::Rectangle => json!({"type": "rectangle", "upper_left": [0, 0], "width": w, "height": h}),
        DataType::Circle => json!({"type": "circle", "center": [w / 2, h / 2], "radius": w.min(h) / 4}),
        DataType::Integer => json!({"type": "integer", "value": 1}),
        DataType::Float => json!({"type": "float", "value": 0.5}),
        DataType::Bool => json!({"type": "bool", "value": true}),
        DataType::String => json!({"type": "string", "value": "fixture"}),
        DataType::Class => {
            let suffix = match &io.classes {
                Some(c) => c.first()?.clone(),
                None => ead.classes.suffixes().into_iter().next()?,
            };
            json!({"type": "class", "value": format!("{}.classes.{suffix}", ead.namespace)})
        }
        DataType::Collection => {
            let items = io.items.as_deref()?;
            let item = synthesize(ead, items, job, slide)?;
            json!({"type": "collection", "item_type": items.data_type, "items": [item]})
        }
    };
    if io.data_type.is_annotation() {
        v["npp_created"] = json!(npp);
    }
    if let Some(r) = reference {
        v["reference"] = r;
    } else if io.data_type == DataType::Class {
        // class values must reference something; the slide is always bound
        v["reference"] = json!(job.inputs.values().next()?);
    }
    Some(v)
}

/// Outputs of a job with every id replaced by its position (`inputs.roi`,
/// `outputs.cells.items[3]`, ...), so reruns compare equal up to ids.
pub fn canonical_outputs(orch: &Orchestrator, job: &Job) -> BTreeMap<String, Value> {
    let mut names: HashMap<String, String> = HashMap::new();
    let label = |prefix: String, e: &Value, names: &mut HashMap<String, String>| {
        fn walk(v: &Value, at: String, names: &mut HashMap<String, String>) {
            if let Some(id) = v.get("id").and_then(Value::as_str) {
                names.insert(id.to_string(), at.clone());
            }
            if let Some(items) = v.get("items").and_then(Value::as_array) {
                for (i, item) in items.iter().enumerate() {
                    walk(item, format!("{at}.items[{i}]"), names);
                }
            }
        }
        walk(e, prefix, names);
    };
    let docs: Vec<(String, String, Value)> = job
        .inputs
        .iter()
        .map(|(k, id)| ("inputs", k, id))
        .chain(job.outputs.iter().map(|(k, id)| ("outputs", k, id)))
        .map(|(dir, k, id)| {
            let doc = orch.entity(*id).map(|e| e.to_json()).unwrap_or_else(|| json!({"id": id}));
            (dir.to_string(), k.clone(), doc)
        })
        .collect();
    for (dir, k, doc) in &docs {
        label(format!("{dir}.{k}"), doc, &mut names);
    }
    fn rewrite(v: &Value, names: &HashMap<String, String>) -> Value {
        match v {
            Value::String(s) => Value::String(names.get(s).cloned().unwrap_or_else(|| s.clone())),
            Value::Array(a) => Value::Array(a.iter().map(|x| rewrite(x, names)).collect()),
            Value::Object(m) => Value::Object(m.iter().map(|(k, x)| (k.clone(), rewrite(x, names))).collect()),
            other => other.clone(),
        }
    }
    docs.into_iter()
        .filter(|(dir, _, _)| dir == "outputs")
        .map(|(_, k, doc)| (k, rewrite(&doc, &names)))
        .collect()
}

/// Loads a bundle and runs the suite; `Arc` keeps the signature usable
/// from threads.
pub fn run_bundle_dir(dir: &Path, seed: u64) -> Result<Arc<ComplianceReport>, ComplianceError> {
    Ok(Arc::new(run_compliance(&Bundle::load(dir)?, seed)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::orchestrator::{Endpoints, Settings};
    use crate::slides::SlideRegistry;

    fn ead() -> String {
        json!({
            "schema_version": "1.0",
            "namespace": "org.example.ats.v1",
            "name": "ats unit",
            "modes": {"standalone": {"inputs": ["roi", "slide", "marks", "label", "n"], "outputs": ["score"]}},
            "io": {
                "slide": {"type": "wsi"},
                "roi": {"type": "rectangle", "reference_to": "inputs.slide"},
                "marks": {"type": "collection", "items": {"type": "point"}, "reference_to": "inputs.roi"},
                "label": {"type": "class", "reference_to": "inputs.roi"},
                "n": {"type": "integer"},
                "score": {"type": "float", "reference_to": "inputs.roi"}
            },
            "classes": {"tumor": {}}
        })
        .to_string()
    }

    fn setup() -> (tempfile::TempDir, Orchestrator, SlideInfo, AppRecordId) {
        let dir = tempfile::tempdir().unwrap();
        let slides = Arc::new(SlideRegistry::open(dir.path()).unwrap());
        let (slide, _) = slides.generate(3, &SyntheticSpec::new(300, 200, 1, 1)).unwrap();
        let orch = Orchestrator::in_memory(slides, Arc::new(ManualClock::new(5)), Settings::default());
        orch.set_endpoints(Endpoints { app_api: "http://127.0.0.1:9/app/v1".into(), slide_api: "http://127.0.0.1:9/v1".into() });
        let app = orch.register_app(&ead(), ExecutorSpec::external()).unwrap();
        (dir, orch, slide, app.app_id)
    }

    type AppRecordId = Id;

    #[test]
    fn assemble_resolves_reference_order() {
        let (_d, orch, slide, app) = setup();
        let ead = validate_ead(&ead()).unwrap().ead.unwrap();
        let (job, _) = orch.create_job(app, Mode::Standalone).unwrap();
        let job = assemble(&orch, &ead, Mode::Standalone, job.job_id, &slide).unwrap();
        assert_eq!(job.status, JobStatus::Ready);
        assert_eq!(job.inputs.len(), 5);
        let roi = orch.entity(job.inputs["roi"]).unwrap().to_json();
        assert_eq!(roi["width"], 300);
        assert_eq!(roi["reference"], json!(slide.slide_id));
    }

    #[test]
    fn canonical_outputs_ignore_ids() {
        let (_d, orch, slide, app) = setup();
        let ead = validate_ead(&ead()).unwrap().ead.unwrap();
        let mut done = Vec::new();
        for value in [0.25, 0.25, 0.5] {
            let (job, secret) = orch.create_job(app, Mode::Standalone).unwrap();
            let job = assemble(&orch, &ead, Mode::Standalone, job.job_id, &slide).unwrap();
            orch.start_job(job.job_id).unwrap();
            let body = json!({"type": "float", "value": value, "reference": job.inputs["roi"]});
            orch.post_output(Some(&secret), job.job_id, "score", body.to_string().as_bytes()).unwrap();
            done.push(orch.finalize(Some(&secret), job.job_id).unwrap());
        }
        let c: Vec<_> = done.iter().map(|j| canonical_outputs(&orch, j)).collect();
        assert_ne!(done[0].outputs["score"], done[1].outputs["score"]);
        assert_eq!(c[0], c[1]);
        assert_ne!(c[0], c[2]);
        assert_eq!(c[0]["score"]["reference"], "inputs.roi");
    }

    #[test]
    fn truncated_container_fails_tile_reads() {
        let dir = tempfile::tempdir().unwrap();
        let slides = SlideRegistry::open(dir.path()).unwrap();
        let (info, _) = slides.generate(9, &SyntheticSpec::new(600, 300, 0, 0)).unwrap();
        let entry = slides.get(info.slide_id).unwrap();
        assert!(entry.reader.read_tile(0, 0, 0).is_ok());
        truncate_tiles(&entry.path, &info).unwrap();
        let err = entry.reader.read_tile(0, 1, 0).unwrap_err();
        assert_eq!(err.code(), "TRUNCATED_FILE");
    }

    #[test]
    fn bundle_errors_and_relative_command() {
        let dir = tempfile::tempdir().unwrap();
        let err = Bundle::load(dir.path()).unwrap_err();
        assert!(err.to_string().starts_with("BUNDLE_UNREADABLE"));
        std::fs::write(dir.path().join("ead.json"), ead()).unwrap();
        std::fs::write(dir.path().join("run.toml"), "command = \"bin/app\"\n").unwrap();
        let b = Bundle::load(dir.path()).unwrap();
        assert_eq!(Path::new(&b.executor.command), dir.path().join("bin/app"));
        std::fs::write(dir.path().join("run.toml"), "comand = 1\n").unwrap();
        assert!(Bundle::load(dir.path()).is_err());
    }

    #[test]
    fn invalid_ead_skips_everything_else() {
        let bundle = Bundle {
            dir: PathBuf::new(),
            ead_text: json!({"schema_version": "1.0", "namespace": "bad ns", "name": "x", "modes": {}, "io": {}}).to_string(),
            executor: ExecutorSpec::external(),
        };
        let r = run_compliance(&bundle, 1).unwrap();
        assert_eq!(r.overall, Verdict::Fail);
        assert_eq!(r.failed_checks(), ["EAD_VALID"]);
        assert_eq!(r.checks.len(), CHECKS.len());
        assert!(r.checks[1..].iter().all(|c| c.verdict == Verdict::Skip));
    }
}
