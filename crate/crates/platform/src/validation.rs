// SPDX-License-Identifier: Apache-2.0

//! Validation campaigns: one standalone job per manifest entry, TPS read
//! from the app's float output, report assembled by the core aggregator.
//! The app only ever sees the slide and a full-slide rectangle.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use pathharbor_core::model::{DataType, Mode, ReferenceTarget, SlideInfo};
use pathharbor_core::slide::synth::{CellClass, SplitMix64, SyntheticSpec};
use pathharbor_core::validation::{
    aggregate_report, compute_tps, Cutoffs, ManifestEntry, Outcome, RawResult, ValidationError, ValidationManifest,
    ValidationReport,
};
use pathharbor_core::Id;
use parking_lot::Mutex;
use serde_json::json;

use crate::error::ApiError;
use crate::orchestrator::{AppRecord, JobStatus, Orchestrator};
use crate::slides::SlideRegistry;

pub const DEFAULT_OUTPUT_KEY: &str = "tps_score";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("APP_INCOMPATIBLE: {0}")]
    AppIncompatible(String),
    #[error("UNKNOWN_APP: {0}")]
    UnknownApp(String),
    #[error("{}: {}", .0.code(), .0)]
    Manifest(#[from] ValidationError),
    #[error("{0}")]
    Platform(#[from] ApiError),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output_key: String,
    pub parallel: usize,
    /// Per-job wait; the orchestrator's own timeout applies as well.
    pub job_wait: Duration,
    pub cutoffs: Cutoffs,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            output_key: DEFAULT_OUTPUT_KEY.into(),
            parallel: 2,
            job_wait: Duration::from_secs(900),
            cutoffs: Cutoffs::default(),
        }
    }
}

/// How the runner binds an app: key of the wsi input and, if present, of
/// the rectangle ROI input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub wsi: String,
    pub roi: Option<String>,
}

/// Checks that the standalone mode takes a wsi (plus optionally one
/// rectangle on it) and declares `output_key` as a float output.
pub fn binding_for(app: &AppRecord, output_key: &str) -> Result<Binding, RunError> {
    let incompatible = |m: String| RunError::AppIncompatible(m);
    let ead = &app.ead;
    let spec = ead.mode(Mode::Standalone).ok_or_else(|| incompatible("no standalone mode".into()))?;
    if !spec.outputs.iter().any(|k| k == output_key) || ead.io[output_key].data_type != DataType::Float {
        return Err(incompatible(format!("no float output named {output_key}")));
    }
    let mut wsi = None;
    let mut roi = None;
    for key in &spec.inputs {
        match ead.io[key].data_type {
            DataType::Wsi if wsi.is_none() => wsi = Some(key.clone()),
            DataType::Rectangle if roi.is_none() => roi = Some(key.clone()),
            other => return Err(incompatible(format!("cannot bind input {key} of type {other}"))),
        }
    }
    let wsi = wsi.ok_or_else(|| incompatible("no wsi input".into()))?;
    if let Some(r) = &roi {
        let target = ead.io[r].reference_to.as_deref().and_then(ReferenceTarget::parse);
        if target.is_some_and(|t| t.key != wsi) {
            return Err(incompatible(format!("{r} does not reference the slide")));
        }
    }
    Ok(Binding { wsi, roi })
}

/// Runs one job for `slide` and returns its outcome.
fn run_entry(orch: &Orchestrator, app: &AppRecord, binding: &Binding, slide: &SlideInfo, opts: &RunOptions) -> RawResult {
    let mut job_id = None;
    let outcome = (|| -> Result<f64, String> {
        let err = |e: ApiError| format!("{}: {}", e.code.as_str(), e.message);
        let (job, _) = orch.create_job(app.app_id, Mode::Standalone).map_err(err)?;
        job_id = Some(job.job_id);
        orch.bind_input(job.job_id, &binding.wsi, &json!({"type": "wsi", "id": slide.slide_id})).map_err(err)?;
        if let Some(roi) = &binding.roi {
            let rect = json!({
                "type": "rectangle",
                "upper_left": [0, 0],
                "width": slide.width_base,
                "height": slide.height_base,
                "npp_created": slide.pixel_size_nm as f64,
                "reference": slide.slide_id,
            });
            orch.bind_input(job.job_id, roi, &rect).map_err(err)?;
        }
        orch.start_job(job.job_id).map_err(err)?;
        let done = orch.wait_terminal(job.job_id, opts.job_wait).ok_or("job vanished")?;
        if done.status != JobStatus::Completed {
            let why = done.failure_message.clone().unwrap_or_default();
            return Err(format!("job {:?}: {why}", done.status));
        }
        let id = done.outputs.get(&opts.output_key).ok_or("output missing")?;
        let doc = orch.entity(*id).ok_or("output entity missing")?.to_json();
        doc["value"].as_f64().ok_or_else(|| "output is not a float".into())
    })();
    RawResult {
        slide_id: slide.slide_id,
        job_id,
        outcome: match outcome {
            Ok(v) => Outcome::Tps(v),
            Err(m) => Outcome::Failed(m),
        },
    }
}

/// One job per entry with at most `opts.parallel` in flight.
pub fn run_validation(
    orch: &Orchestrator,
    app: &AppRecord,
    manifest: &ValidationManifest,
    opts: &RunOptions,
) -> Result<Vec<RawResult>, RunError> {
    let binding = binding_for(app, &opts.output_key)?;
    let slides = orch.slides();
    manifest.check(|id| slides.contains(*id))?;
    let infos: Vec<SlideInfo> = manifest.entries.iter().map(|e| slides.info(e.slide_id).expect("checked")).collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(infos.len()));
    std::thread::scope(|s| {
        for _ in 0..opts.parallel.clamp(1, infos.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(info) = infos.get(i) else { break };
                let r = run_entry(orch, app, &binding, info, opts);
                results.lock().push((i, r));
            });
        }
    });
    let mut results = results.into_inner();
    results.sort_by_key(|(i, _)| *i);
    Ok(results.into_iter().map(|(_, r)| r).collect())
}

/// Runs a campaign and aggregates the report.
pub fn validate(
    orch: &Orchestrator,
    app: &AppRecord,
    manifest: &ValidationManifest,
    opts: &RunOptions,
) -> Result<ValidationReport, RunError> {
    let raw = run_validation(orch, app, manifest, opts)?;
    Ok(aggregate_report(&app.namespace, &raw, manifest, opts.cutoffs))
}

#[derive(Debug, Clone)]
pub struct CampaignSpec {
    pub seed: u64,
    pub cases: u32,
    pub scanners: Vec<String>,
    pub antibody: String,
    pub width: u32,
    pub height: u32,
    /// Upper bound of the ground-truth TPS per case.
    pub max_tps: f64,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        CampaignSpec {
            seed: 4,
            cases: 22,
            scanners: vec!["scanner-a".into(), "scanner-b".into()],
            antibody: "22C3".into(),
            width: 768,
            height: 512,
            max_tps: 95.0,
        }
    }
}

/// Generates one slide per case and scanner with seeded cell counts and a
/// manifest whose panel values are (gt - 2, gt, gt + 3) clamped to
/// [0, 100], so the consensus equals the ground-truth TPS.
pub fn synthetic_campaign(slides: &SlideRegistry, spec: &CampaignSpec) -> Result<ValidationManifest, ApiError> {
    let mut rng = SplitMix64::new(spec.seed);
    let mut entries = Vec::new();
    for case in 0..spec.cases {
        let total = 12 + rng.below(29) as u32;
        let max_pos = (f64::from(total) * spec.max_tps / 100.0).floor() as u64;
        let pos = rng.below(max_pos + 1) as u32;
        let case_seed = rng.next_u64();
        for scanner in &spec.scanners {
            let synth = SyntheticSpec {
                antibody_variant: spec.antibody.clone(),
                ..SyntheticSpec::new(spec.width, spec.height, pos, total - pos).with_scanner(scanner)
            };
            let (info, sheet) = slides.generate(case_seed, &synth)?;
            let p = sheet.count(CellClass::Positive) as u64;
            let n = sheet.count(CellClass::Negative) as u64;
            let gt = compute_tps(p, p + n).map_err(|e| ApiError::internal(e.to_string()))?;
            entries.push(ManifestEntry {
                case_id: format!("case-{:02}", case + 1),
                slide_id: info.slide_id,
                antibody: spec.antibody.clone(),
                scanner: scanner.clone(),
                reference_tps: [(gt - 2.0).max(0.0), gt, (gt + 3.0).min(100.0)],
                ground_truth: Some(format!("gt:{}", info.slide_id)),
                tags: Default::default(),
            });
        }
    }
    Ok(ValidationManifest {
        dataset_id: format!("synthetic-{}-{}", spec.seed, spec.cases),
        antibodies: vec![spec.antibody.clone()],
        scanners: spec.scanners.clone(),
        entries,
    })
}

/// Slide ids referenced by `m`, in entry order.
pub fn manifest_slides(m: &ValidationManifest) -> Vec<Id> {
    m.entries.iter().map(|e| e.slide_id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::executor::ExecutorSpec;
    use crate::orchestrator::Settings;
    use std::sync::Arc;

    fn orch(dir: &std::path::Path) -> Orchestrator {
        let slides = Arc::new(SlideRegistry::open(dir).unwrap());
        Orchestrator::in_memory(slides, Arc::new(ManualClock::new(1)), Settings::default())
    }

    fn register(o: &Orchestrator, ns: &str, inputs: serde_json::Value, io: serde_json::Value) -> Result<Binding, RunError> {
        let ead = json!({
            "schema_version": "1.0", "namespace": ns, "name": "v",
            "modes": {"standalone": {"inputs": inputs, "outputs": ["tps_score"]}},
            "io": io,
        });
        let app = o.register_app(&ead.to_string(), ExecutorSpec::external()).unwrap();
        binding_for(&app, DEFAULT_OUTPUT_KEY)
    }

    #[test]
    fn binding_rules() {
        let dir = tempfile::tempdir().unwrap();
        let o = orch(dir.path());
        let ok = register(
            &o,
            "org.example.va.v1",
            json!(["slide", "roi"]),
            json!({"slide": {"type": "wsi"}, "roi": {"type": "rectangle", "reference_to": "inputs.slide"}, "tps_score": {"type": "float"}}),
        )
        .unwrap();
        assert_eq!(ok, Binding { wsi: "slide".into(), roi: Some("roi".into()) });
        let int_out = register(
            &o,
            "org.example.vb.v1",
            json!(["slide"]),
            json!({"slide": {"type": "wsi"}, "tps_score": {"type": "integer"}}),
        );
        assert!(matches!(int_out, Err(RunError::AppIncompatible(_))));
        let extra = register(
            &o,
            "org.example.vc.v1",
            json!(["slide", "k"]),
            json!({"slide": {"type": "wsi"}, "k": {"type": "integer"}, "tps_score": {"type": "float"}}),
        );
        assert!(matches!(extra, Err(RunError::AppIncompatible(_))));
    }

    #[test]
    fn campaign_consensus_is_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let slides = SlideRegistry::open(dir.path()).unwrap();
        let spec = CampaignSpec { cases: 3, width: 400, height: 300, ..CampaignSpec::default() };
        let m = synthetic_campaign(&slides, &spec).unwrap();
        assert_eq!(m.entries.len(), 6);
        m.check(|id| slides.contains(*id)).unwrap();
        for e in &m.entries {
            let gt = slides.ground_truth(e.slide_id).unwrap();
            let p = gt.count(CellClass::Positive) as u64;
            let tps = compute_tps(p, gt.cells.len() as u64).unwrap();
            assert_eq!(e.consensus(), tps);
            assert!(tps <= 95.0);
        }
        // both scanner variants of a case share the cell layout
        let a = slides.ground_truth(m.entries[0].slide_id).unwrap();
        let b = slides.ground_truth(m.entries[1].slide_id).unwrap();
        assert_eq!(a.cells, b.cells);
    }
}
