// SPDX-License-Identifier: Apache-2.0

//! TPS validation metrics: manifests, panel consensus, clinical categories
//! and stratified error reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::Id;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("manifest references unknown slide {0}")]
    UnresolvedSlide(Id),
    #[error("no tumor cells")]
    NoTumorCells,
    #[error("positive count {positive} exceeds total {total}")]
    InvalidCounts { positive: u64, total: u64 },
}

impl ValidationError {
    pub fn code(&self) -> &'static str {
        match self {
            ValidationError::MalformedManifest(_) => "MALFORMED_MANIFEST",
            ValidationError::UnresolvedSlide(_) => "UNRESOLVED_SLIDE",
            ValidationError::NoTumorCells => "NO_TUMOR_CELLS",
            ValidationError::InvalidCounts { .. } => "INVALID_COUNTS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub case_id: String,
    pub slide_id: Id,
    pub antibody: String,
    pub scanner: String,
    pub reference_tps: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    /// Optional extra strata, e.g. `{"region": "invasive_margin"}`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, String>,
}

impl ManifestEntry {
    pub fn consensus(&self) -> f64 {
        median3(self.reference_tps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationManifest {
    pub dataset_id: String,
    /// Allowed antibody tags; empty means unrestricted.
    #[serde(default)]
    pub antibodies: Vec<String>,
    #[serde(default)]
    pub scanners: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl ValidationManifest {
    /// Parses and checks a manifest. `slide_exists` resolves slide ids
    /// against the slide store.
    pub fn parse(text: &str, slide_exists: impl Fn(&Id) -> bool) -> Result<Self, ValidationError> {
        let m: ValidationManifest =
            serde_json::from_str(text).map_err(|e| ValidationError::MalformedManifest(e.to_string()))?;
        m.check(slide_exists)?;
        Ok(m)
    }

    pub fn check(&self, slide_exists: impl Fn(&Id) -> bool) -> Result<(), ValidationError> {
        let bad = |m: String| Err(ValidationError::MalformedManifest(m));
        if self.dataset_id.is_empty() {
            return bad("dataset_id is empty".into());
        }
        let mut seen = BTreeSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.case_id.is_empty() {
                return bad(format!("entries[{i}].case_id is empty"));
            }
            if !seen.insert(e.slide_id) {
                return bad(format!("entries[{i}].slide_id {} appears twice", e.slide_id));
            }
            if e.reference_tps.iter().any(|v| !v.is_finite() || !(0.0..=100.0).contains(v)) {
                return bad(format!("entries[{i}].reference_tps must be finite values in [0, 100]"));
            }
            if !self.antibodies.is_empty() && !self.antibodies.contains(&e.antibody) {
                return bad(format!("entries[{i}].antibody {:?} is not in the antibody set", e.antibody));
            }
            if !self.scanners.is_empty() && !self.scanners.contains(&e.scanner) {
                return bad(format!("entries[{i}].scanner {:?} is not in the scanner set", e.scanner));
            }
        }
        if let Some(e) = self.entries.iter().find(|e| !slide_exists(&e.slide_id)) {
            return Err(ValidationError::UnresolvedSlide(e.slide_id));
        }
        Ok(())
    }
}

pub fn median3(v: [f64; 3]) -> f64 {
    let mut s = v;
    s.sort_by(f64::total_cmp);
    s[1]
}

/// Tumor proportion score in percent.
pub fn compute_tps(positive: u64, total: u64) -> Result<f64, ValidationError> {
    if total == 0 {
        return Err(ValidationError::NoTumorCells);
    }
    if positive > total {
        return Err(ValidationError::InvalidCounts { positive, total });
    }
    Ok(100.0 * positive as f64 / total as f64)
}

/// Rounds to one decimal for display.
pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TpsCategory {
    #[serde(rename = "<1")]
    Negative,
    #[serde(rename = "1-49.9")]
    Low,
    #[serde(rename = ">=50")]
    High,
}

impl TpsCategory {
    pub fn label(self) -> &'static str {
        match self {
            TpsCategory::Negative => "<1",
            TpsCategory::Low => "1-49.9",
            TpsCategory::High => ">=50",
        }
    }
}

/// Category cutoffs with closed lower bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub low: f64,
    pub high: f64,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Cutoffs { low: 1.0, high: 50.0 }
    }
}

impl Cutoffs {
    pub fn categorize(&self, tps: f64) -> TpsCategory {
        if tps >= self.high {
            TpsCategory::High
        } else if tps >= self.low {
            TpsCategory::Low
        } else {
            TpsCategory::Negative
        }
    }
}

/// Outcome of one validation job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResult {
    pub slide_id: Id,
    pub job_id: Option<Id>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Tps(f64),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRow {
    pub case_id: String,
    pub slide_id: Id,
    pub antibody: String,
    pub scanner: String,
    pub computed_tps: f64,
    pub reference_tps_consensus: f64,
    pub abs_error: f64,
    pub category_computed: TpsCategory,
    pub category_reference: TpsCategory,
    pub category_agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub tag: String,
    pub n: usize,
    /// `None` when the stratum is empty.
    pub mae: Option<f64>,
    pub agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub case_id: String,
    pub slide_id: Id,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub report_version: u32,
    pub app: String,
    pub dataset_id: String,
    pub cutoffs: Cutoffs,
    pub entries: Vec<EntryRow>,
    pub overall: StratumStats,
    /// Dimension name -> strata in lexicographic tag order.
    pub strata: BTreeMap<String, Vec<StratumStats>>,
    pub failures: Vec<FailureRow>,
}

fn stats(tag: &str, rows: &[&EntryRow]) -> StratumStats {
    let n = rows.len();
    if n == 0 {
        return StratumStats { tag: tag.into(), n, mae: None, agreement: None };
    }
    let mae = rows.iter().map(|r| r.abs_error).sum::<f64>() / n as f64;
    let hits = rows.iter().filter(|r| r.category_agrees).count();
    StratumStats { tag: tag.into(), n, mae: Some(mae), agreement: Some(hits as f64 / n as f64) }
}

/// Joins raw results with the manifest and computes per-entry rows and
/// aggregates. Output does not depend on entry or result order.
pub fn aggregate_report(app: &str, results: &[RawResult], manifest: &ValidationManifest, cutoffs: Cutoffs) -> ValidationReport {
    let by_slide: BTreeMap<Id, &RawResult> = results.iter().map(|r| (r.slide_id, r)).collect();
    let mut entries: Vec<&ManifestEntry> = manifest.entries.iter().collect();
    entries.sort_by(|a, b| (&a.case_id, &a.scanner, &a.antibody, a.slide_id).cmp(&(&b.case_id, &b.scanner, &b.antibody, b.slide_id)));

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for e in &entries {
        let fail = |reason: String| FailureRow { case_id: e.case_id.clone(), slide_id: e.slide_id, reason };
        match by_slide.get(&e.slide_id).map(|r| &r.outcome) {
            None => failures.push(fail("no result".into())),
            Some(Outcome::Failed(msg)) => failures.push(fail(msg.clone())),
            Some(Outcome::Tps(v)) if !v.is_finite() || !(0.0..=100.0).contains(v) => {
                failures.push(fail(format!("computed TPS {v} outside [0, 100]")))
            }
            Some(Outcome::Tps(v)) => {
                let consensus = e.consensus();
                let (cc, cr) = (cutoffs.categorize(*v), cutoffs.categorize(consensus));
                rows.push(EntryRow {
                    case_id: e.case_id.clone(),
                    slide_id: e.slide_id,
                    antibody: e.antibody.clone(),
                    scanner: e.scanner.clone(),
                    computed_tps: *v,
                    reference_tps_consensus: consensus,
                    abs_error: (v - consensus).abs(),
                    category_computed: cc,
                    category_reference: cr,
                    category_agrees: cc == cr,
                });
            }
        }
    }

    let mut strata = BTreeMap::new();
    let mut dims: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    // every declared tag gets a stratum, even if empty
    dims.entry("antibody".into()).or_default().extend(manifest.antibodies.iter().cloned());
    dims.entry("scanner".into()).or_default().extend(manifest.scanners.iter().cloned());
    for e in &manifest.entries {
        dims.get_mut("antibody").unwrap().insert(e.antibody.clone());
        dims.get_mut("scanner").unwrap().insert(e.scanner.clone());
        for (k, v) in &e.tags {
            dims.entry(k.clone()).or_default().insert(v.clone());
        }
    }
    let tag_of = |row: &EntryRow, dim: &str| -> Option<String> {
        match dim {
            "antibody" => Some(row.antibody.clone()),
            "scanner" => Some(row.scanner.clone()),
            _ => manifest.entries.iter().find(|e| e.slide_id == row.slide_id).and_then(|e| e.tags.get(dim).cloned()),
        }
    };
    for (dim, tags) in &dims {
        let list = tags
            .iter()
            .map(|tag| {
                let members: Vec<&EntryRow> = rows.iter().filter(|r| tag_of(r, dim).as_deref() == Some(tag)).collect();
                stats(tag, &members)
            })
            .collect();
        strata.insert(dim.clone(), list);
    }

    let all: Vec<&EntryRow> = rows.iter().collect();
    ValidationReport {
        report_version: 1,
        app: app.into(),
        dataset_id: manifest.dataset_id.clone(),
        cutoffs,
        overall: stats("overall", &all),
        entries: rows,
        strata,
        failures,
    }
}

fn fmt_opt(v: Option<f64>, scale: f64, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{:.*}", digits, x * scale))
}

impl ValidationReport {
    /// Plain-text table with one row per stratum.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "app: {}  dataset: {}", self.app, self.dataset_id);
        let _ = writeln!(out, "{:<10} {:<24} {:>5} {:>8} {:>10}", "stratum", "tag", "n", "MAE", "agreement");
        let mut line = |dim: &str, s: &StratumStats| {
            let _ = writeln!(
                out,
                "{:<10} {:<24} {:>5} {:>8} {:>9}%",
                dim,
                s.tag,
                s.n,
                fmt_opt(s.mae, 1.0, 3),
                fmt_opt(s.agreement, 100.0, 1)
            );
        };
        line("overall", &self.overall);
        for (dim, list) in &self.strata {
            for s in list {
                line(dim, s);
            }
        }
        let _ = writeln!(out, "failures: {}", self.failures.len());
        for f in &self.failures {
            let _ = writeln!(out, "  {} {} {}", f.case_id, f.slide_id, f.reason);
        }
        out
    }

    pub fn render_html(&self) -> String {
        let esc = |s: &str| s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;");
        let mut out = String::from("<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>Validation report</title>");
        out.push_str("<style>body{font-family:sans-serif}td,th{padding:2px 8px;text-align:right}td:first-child,td:nth-child(2){text-align:left}</style></head><body>\n");
        let _ = writeln!(out, "<h1>{}</h1><p>dataset {}</p>", esc(&self.app), esc(&self.dataset_id));
        out.push_str("<table><tr><th>stratum</th><th>tag</th><th>n</th><th>MAE</th><th>agreement %</th></tr>\n");
        let mut row = |dim: &str, s: &StratumStats| {
            let _ = writeln!(
                out,
                "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
                esc(dim),
                esc(&s.tag),
                s.n,
                fmt_opt(s.mae, 1.0, 3),
                fmt_opt(s.agreement, 100.0, 1)
            );
        };
        row("overall", &self.overall);
        for (dim, list) in &self.strata {
            for s in list {
                row(dim, s);
            }
        }
        out.push_str("</table>\n<h2>Entries</h2><table><tr><th>case</th><th>slide</th><th>computed</th><th>consensus</th><th>abs error</th><th>categories</th></tr>\n");
        for r in &self.entries {
            let _ = writeln!(
                out,
                "<tr><td>{}</td><td>{}</td><td>{:.1}</td><td>{:.1}</td><td>{:.1}</td><td>{} / {}</td></tr>",
                esc(&r.case_id),
                r.slide_id,
                r.computed_tps,
                r.reference_tps_consensus,
                r.abs_error,
                esc(r.category_computed.label()),
                esc(r.category_reference.label())
            );
        }
        let _ = writeln!(out, "</table>\n<h2>Failures ({})</h2><ul>", self.failures.len());
        for f in &self.failures {
            let _ = writeln!(out, "<li>{} {}: {}</li>", esc(&f.case_id), f.slide_id, esc(&f.reason));
        }
        out.push_str("</ul></body></html>\n");
        out
    }
}
