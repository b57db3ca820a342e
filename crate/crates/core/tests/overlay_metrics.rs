// SPDX-License-Identifier: Apache-2.0

use pathharbor_core::detect::detect_cells;
use pathharbor_core::model::SlideInfo;
use pathharbor_core::overlay::{
    decode_values, default_colormap, default_registry, encode_values, luminance, map_value_to_color, render_tile,
    ColormapSpec, ControlPoint, OverlayPyramid, QuantityDescriptor, SemanticKind,
};
use pathharbor_core::slide::synth::{generate, CellClass, SyntheticSpec};
use pathharbor_core::validation::{
    aggregate_report, compute_tps, median3, Cutoffs, ManifestEntry, Outcome, RawResult, TpsCategory, ValidationManifest,
};
use pathharbor_core::Id;

fn prob() -> QuantityDescriptor {
    QuantityDescriptor::new("tumor probability", "dimensionless", 0.0, 1.0, SemanticKind::Probability)
}

#[test]
fn tiles_roundtrip_and_default_to_nodata() {
    let info = SlideInfo::new(Id::derive(&[b"o"]), 600, 300, 256, 250);
    let mut o = OverlayPyramid::new(Id::derive(&[b"ov"]), &info, None, prob()).unwrap();
    let values: Vec<f32> = (0..256 * 256).map(|i| (i % 256 + i / 256) as f32 / 512.0).collect();
    o.write_tile(0, 1, 0, values.clone()).unwrap();
    let back = o.get_tile(0, 1, 0).unwrap();
    assert!(back.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(o.get_tile(0, 0, 0).unwrap().iter().all(|v| v.is_nan()));
    let wire = encode_values(&values);
    assert_eq!(wire.len(), 256 * 256 * 4);
    assert_eq!(decode_values(&wire).unwrap(), values);
    assert!(o.write_tile(0, 9, 0, values).is_err());
}

#[test]
fn color_mapping_rules() {
    let gray = ColormapSpec {
        colormap_id: "gray".into(),
        semantic_kind: SemanticKind::Probability,
        control_points: vec![ControlPoint { t: 0.0, rgba: [0, 0, 0, 255] }, ControlPoint { t: 1.0, rgba: [255, 255, 255, 255] }],
    };
    assert_eq!(map_value_to_color(0.5, &prob(), &gray).unwrap(), [128, 128, 128, 255]);
    let cm = default_colormap(SemanticKind::Probability);
    assert_eq!(map_value_to_color(0.0, &prob(), &cm).unwrap(), cm.control_points[0].rgba);
    assert_eq!(map_value_to_color(f32::NAN, &prob(), &cm).unwrap(), [0, 0, 0, 0]);
    let zero = render_tile(&[0.1, 0.9, f32::NAN], &prob(), &cm, 0.0).unwrap();
    assert!(zero.iter().all(|&b| b == 0));
    let kinds: Vec<_> = default_registry().iter().map(|c| c.semantic_kind).collect();
    assert_eq!(kinds, SemanticKind::ALL);
}

#[test]
fn monotone_maps_render_monotone_luminance() {
    for cm in default_registry() {
        let lum: Vec<f64> = cm.control_points.iter().map(|c| luminance(c.rgba)).collect();
        let up = lum.windows(2).all(|w| w[0] <= w[1]);
        let down = lum.windows(2).all(|w| w[0] >= w[1]);
        if !up && !down {
            continue;
        }
        let q = QuantityDescriptor::new("q", "u", 0.0, 10.0, cm.semantic_kind);
        let q = if cm.semantic_kind == SemanticKind::Attribution {
            QuantityDescriptor::new("q", "u", -10.0, 10.0, cm.semantic_kind)
        } else if cm.semantic_kind == SemanticKind::Probability {
            prob()
        } else {
            q
        };
        let mut prev: Option<f64> = None;
        for i in 0..=20_000 {
            let v = (q.min() + (q.max() - q.min()) * f64::from(i) / 20_000.0) as f32;
            let l = luminance(map_value_to_color(v, &q, &cm).unwrap());
            if let Some(p) = prev {
                assert!(if up { l >= p } else { l <= p }, "{} at {v}", cm.colormap_id);
            }
            prev = Some(l);
        }
    }
}

#[test]
fn detector_recovers_seed_42() {
    let spec = SyntheticSpec::new(1024, 768, 30, 70);
    let s = generate(42, &spec, Id::derive(&[b"d"])).unwrap();
    let d = detect_cells(&s.base, [0, 0]);
    assert_eq!((d.positive.len(), d.negative.len()), (30, 70));
    let truth = &s.ground_truth;
    assert_eq!(truth.count(CellClass::Positive), 30);
    let tps = compute_tps(d.positive.len() as u64, (d.positive.len() + d.negative.len()) as u64).unwrap();
    assert_eq!(tps, 30.0);
}

#[test]
fn tps_and_categories() {
    assert_eq!(compute_tps(0, 100).unwrap(), 0.0);
    assert_eq!(compute_tps(30, 100).unwrap(), 30.0);
    assert_eq!(compute_tps(0, 0).unwrap_err().code(), "NO_TUMOR_CELLS");
    assert_eq!(median3([10.0, 30.0, 20.0]), 20.0);
    let c = Cutoffs::default();
    assert_eq!(c.categorize(0.5), TpsCategory::Negative);
    assert_eq!(c.categorize(1.0), TpsCategory::Low);
    assert_eq!(c.categorize(49.9), TpsCategory::Low);
    assert_eq!(c.categorize(50.0), TpsCategory::High);
}

fn entry(case: &str, n: u8, scanner: &str, panel: [f64; 3]) -> ManifestEntry {
    ManifestEntry {
        case_id: case.into(),
        slide_id: Id::derive(&[&[n]]),
        antibody: "22C3".into(),
        scanner: scanner.into(),
        reference_tps: panel,
        ground_truth: None,
        tags: Default::default(),
    }
}

#[test]
fn aggregation_is_order_free_and_consistent() {
    let entries = vec![
        entry("a", 1, "scanner-a", [10.0, 30.0, 20.0]),
        entry("a", 2, "scanner-b", [0.5, 1.0, 2.0]),
        entry("b", 3, "scanner-a", [60.0, 70.0, 80.0]),
        entry("b", 4, "scanner-b", [5.0, 5.0, 5.0]),
    ];
    let results = vec![
        RawResult { slide_id: entries[0].slide_id, job_id: None, outcome: Outcome::Tps(30.0) },
        RawResult { slide_id: entries[1].slide_id, job_id: None, outcome: Outcome::Tps(0.5) },
        RawResult { slide_id: entries[2].slide_id, job_id: None, outcome: Outcome::Tps(71.0) },
        RawResult { slide_id: entries[3].slide_id, job_id: None, outcome: Outcome::Failed("NO_TUMOR_CELLS".into()) },
    ];
    let m = ValidationManifest { dataset_id: "d".into(), antibodies: vec![], scanners: vec!["scanner-c".into()], entries };
    let r = aggregate_report("app", &results, &m, Cutoffs::default());
    assert_eq!(r.entries.len(), 3);
    assert_eq!(r.failures.len(), 1);
    let first = r.entries.iter().find(|e| e.slide_id == m.entries[0].slide_id).unwrap();
    assert_eq!((first.abs_error, first.category_agrees), (10.0, true));
    let second = r.entries.iter().find(|e| e.slide_id == m.entries[1].slide_id).unwrap();
    assert!(!second.category_agrees);
    let mae = r.entries.iter().map(|e| e.abs_error).sum::<f64>() / 3.0;
    assert!((r.overall.mae.unwrap() - mae).abs() < 1e-9);
    let scanners: Vec<_> = r.strata["scanner"].iter().map(|s| (s.tag.as_str(), s.n)).collect();
    assert_eq!(scanners, [("scanner-a", 2), ("scanner-b", 1), ("scanner-c", 0)]);

    let mut shuffled = m.clone();
    shuffled.entries.reverse();
    let mut rev = results.clone();
    rev.rotate_left(1);
    assert_eq!(aggregate_report("app", &rev, &shuffled, Cutoffs::default()), r);
}
