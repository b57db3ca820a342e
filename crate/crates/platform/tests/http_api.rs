// SPDX-License-Identifier: Apache-2.0

mod common;

use std::time::Duration;

use common::Stack;
use pathharbor::client::Client;
use pathharbor::fixtures::tps_ead;
use pathharbor::orchestrator::JobStatus;
use pathharbor::ErrorCode;
use pathharbor_core::slide::synth::{CellClass, SyntheticSpec};
use serde_json::{json, Value};

fn viewer(stack: &Stack, slide: &str) -> Client {
    let anon = Client::new(stack.url(), None);
    let scope = anon.post_json(&format!("/wb/v1/scopes/{slide}"), &json!({})).unwrap();
    Client::new(stack.url(), Some(scope["token"].as_str().unwrap().to_string()))
}

#[test]
fn workbench_endpoints() {
    let stack = Stack::start(1);
    let (info, _) = stack.platform.slides.generate(1, &SyntheticSpec::new(600, 400, 2, 3)).unwrap();
    stack.register_fixture("tps-counter");
    let anon = Client::new(stack.url(), None);

    let slides = anon.get_json("/wb/v1/slides").unwrap();
    assert_eq!(slides[0]["slide_id"], json!(info.slide_id));
    let apps = anon.get_json("/wb/v1/apps").unwrap();
    assert_eq!(apps[0]["namespace"], "org.acme.tpsdemo.v1");
    assert_eq!(apps[0]["modes"], json!(["standalone"]));
    let config = anon.get_json("/wb/v1/config").unwrap();
    assert_eq!(config["config_version"], "1");
    assert_eq!(config["colormaps"].as_array().unwrap().len(), 4);
    assert_eq!(config["auth"], "bearer");

    let scope = anon.post_json(&format!("/wb/v1/scopes/{}", info.slide_id), &json!({})).unwrap();
    assert_eq!(scope["slide_id"], json!(info.slide_id));
    assert!(scope["expires_at_ms"].as_u64().unwrap() > 0);
    let missing = anon.post_json(&format!("/wb/v1/scopes/{}", pathharbor::random_id()), &json!({})).unwrap_err();
    assert_eq!(missing.code, ErrorCode::NotFound);
}

#[test]
fn slide_endpoints_need_scope() {
    let stack = Stack::start(1);
    let (a, _) = stack.platform.slides.generate(2, &SyntheticSpec::new(700, 300, 1, 1)).unwrap();
    let (b, _) = stack.platform.slides.generate(3, &SyntheticSpec::new(300, 300, 1, 1)).unwrap();
    let anon = Client::new(stack.url(), None);
    assert_eq!(anon.slide_info(a.slide_id).unwrap_err().code, ErrorCode::Unauthorized);

    let v = viewer(&stack, &a.slide_id.to_string());
    assert_eq!(v.slide_info(a.slide_id).unwrap(), a);
    assert_eq!(v.tile(b.slide_id, 0, 0, 0).unwrap_err().code, ErrorCode::Unauthorized);

    let entry = stack.platform.slides.get(a.slide_id).unwrap();
    let tile = v.tile(a.slide_id, 0, 2, 1).unwrap();
    assert_eq!(tile, entry.reader.read_tile(0, 2, 1).unwrap());
    assert_eq!(v.tile(a.slide_id, 5, 0, 0).unwrap_err().code, ErrorCode::LevelOutOfRange);

    let region = v.region(a.slide_id, 0, 690, -5, 20, 10).unwrap();
    assert_eq!(region.pixel(19, 9), [255, 255, 255]);
    assert_eq!(region.pixel(5, 0), [255, 255, 255]);

    let frame = v.get_bytes(&format!("/dicomweb/studies/{}/series/0/instances/0/frames/4", a.slide_id)).unwrap();
    assert_eq!(frame, entry.reader.read_tile(0, 0, 1).unwrap());
    let meta = v.get_json(&format!("/dicomweb/studies/{}/series/0/metadata", a.slide_id)).unwrap();
    assert_eq!(meta.as_array().unwrap().len(), a.num_levels as usize);
    let err = v.get_bytes(&format!("/dicomweb/studies/{}/series/0/instances/0/frames/0", a.slide_id)).unwrap_err();
    assert_eq!(err.code, ErrorCode::FrameOutOfRange);
}

#[test]
fn roi_job_over_http() {
    let stack = Stack::start(2);
    let (info, truth) = stack.platform.slides.generate(42, &SyntheticSpec::new(1024, 768, 30, 70)).unwrap();
    let api = Client::new(stack.url(), None);
    let exe = common::fixture_exe().display().to_string();
    let app = api
        .post_json(
            "/v1/apps",
            &json!({"ead": tps_ead("org.acme.tpsdemo.v1"), "executor": {"command": exe, "args": ["tps-counter"]}}),
        )
        .unwrap();
    let created = api.post_json("/v1/jobs", &json!({"app_id": app["app_id"], "mode": "standalone"})).unwrap();
    let job = created["job"]["job_id"].as_str().unwrap().to_string();
    api.put_json(&format!("/v1/jobs/{job}/inputs/slide"), &json!({"type": "wsi", "id": info.slide_id})).unwrap();
    let roi = json!({"type": "rectangle", "upper_left": [0, 0], "width": 512, "height": 512, "npp_created": 250.0, "reference": info.slide_id});
    let bound = api.put_json(&format!("/v1/jobs/{job}/inputs/roi"), &roi).unwrap();
    assert_eq!(bound["status"], "READY");
    api.put_json(&format!("/v1/jobs/{job}/run"), &json!({})).unwrap();

    let id = job.parse().unwrap();
    let done = stack.platform.orchestrator.wait_terminal(id, Duration::from_secs(60)).unwrap();
    assert_eq!(done.status, JobStatus::Completed, "{:?}", done.failure_message);
    let view = api.get_json(&format!("/v1/jobs/{job}")).unwrap();
    let pos = view["output_entities"]["positive_cells"]["items"].as_array().unwrap().len();
    let neg = view["output_entities"]["negative_cells"]["items"].as_array().unwrap().len();
    let inside = |c: CellClass| truth.cells.iter().filter(|g| g.class == c && g.center[0] < 512 && g.center[1] < 512).count();
    assert_eq!((pos, neg), (inside(CellClass::Positive), inside(CellClass::Negative)));
    let tps = view["output_entities"]["tps_score"]["value"].as_f64().unwrap();
    assert_eq!(tps, 100.0 * pos as f64 / (pos + neg) as f64);

    // the job token died with the job
    let token = created["token"].as_str().unwrap().to_string();
    let app_client = Client::new(format!("{}/app/v1", stack.url()), Some(token));
    let late = app_client.get_json(&format!("/{job}/inputs/roi")).unwrap_err();
    assert_eq!(late.code, ErrorCode::WrongState);
}

#[test]
fn external_app_drives_the_interface() {
    let stack = Stack::start(1);
    let (info, _) = stack.platform.slides.generate(5, &SyntheticSpec::new(512, 512, 1, 1)).unwrap();
    let api = Client::new(stack.url(), None);
    let ead = json!({
        "schema_version": "1.0", "namespace": "org.example.ext.v1", "name": "ext",
        "modes": {"standalone": {"inputs": ["slide"], "outputs": ["heat", "n"]}},
        "io": {"slide": {"type": "wsi"}, "heat": {"type": "float"}, "n": {"type": "integer", "reference_to": "inputs.slide"}}
    });
    let app = api.post_json("/v1/apps", &json!({"ead": ead, "executor": {"adapter": "external"}})).unwrap();
    let dup = api.post_json("/v1/apps", &json!({"ead": ead, "executor": {"adapter": "external"}})).unwrap_err();
    assert_eq!(dup.code, ErrorCode::DuplicateNamespace);
    let created = api.post_json("/v1/jobs", &json!({"app_id": app["app_id"], "mode": "standalone"})).unwrap();
    let job = created["job"]["job_id"].as_str().unwrap().to_string();
    let token = created["token"].as_str().unwrap().to_string();
    api.put_json(&format!("/v1/jobs/{job}/inputs/slide"), &json!({"type": "wsi", "id": info.slide_id})).unwrap();
    api.put_json(&format!("/v1/jobs/{job}/run"), &json!({})).unwrap();

    let app_api = Client::new(format!("{}/app/v1", stack.url()), Some(token.clone()));
    let anon = Client::new(format!("{}/app/v1", stack.url()), None);
    assert_eq!(anon.get_json(&format!("/{job}/inputs/slide")).unwrap_err().code, ErrorCode::Unauthorized);
    let slide_doc = app_api.get_json(&format!("/{job}/inputs/slide")).unwrap();
    assert_eq!(slide_doc["slide_id"], json!(info.slide_id));

    let wrong = app_api.post_json(&format!("/{job}/outputs/heat"), &json!({"type": "integer", "value": 1})).unwrap_err();
    assert_eq!(wrong.code, ErrorCode::TypeMismatch);
    app_api.post_json(&format!("/{job}/outputs/heat"), &json!({"type": "float", "value": 0.5})).unwrap();
    let early = app_api.send("PUT", &format!("/{job}/finalize"), None).unwrap_err();
    assert_eq!(early.code, ErrorCode::MissingOutput);

    // overlay through the job token, read through a viewer token
    let platform = Client::new(stack.url(), Some(token));
    let ov = platform
        .post_json(
            "/v1/overlays",
            &json!({"slide_id": info.slide_id, "quantity": {"name": "p", "unit": "dimensionless", "range": [0.0, 1.0], "semantic_kind": "probability"}}),
        )
        .unwrap();
    let oid = ov["overlay_id"].as_str().unwrap().to_string();
    let values: Vec<f32> = (0..256 * 256).map(|i| (i % 256) as f32 / 255.0).collect();
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    platform.put_bytes(&format!("/v1/overlays/{oid}/tiles/0/1/1"), "application/x-float32-le", &bytes).unwrap();

    let v = viewer(&stack, &info.slide_id.to_string());
    let read = v.get_bytes(&format!("/v1/overlays/{oid}/value/0/1/1")).unwrap();
    assert_eq!(read, bytes);
    let clash = v.get_bytes(&format!("/v1/overlays/{oid}/render/0/1/1?colormap=yellow-red")).unwrap_err();
    assert_eq!(clash.code, ErrorCode::KindMismatch);
    let rgba = v.get_bytes(&format!("/v1/overlays/{oid}/render/0/1/1?colormap=blue-green-yellow&opacity=0.5")).unwrap();
    assert_eq!(rgba.len(), 256 * 256 * 4);
    assert_eq!(v.get_bytes(&format!("/v1/overlays/{oid}/value/0/1/1")).unwrap(), bytes);
    let listed = v.get_json(&format!("/v1/overlays?slide_id={}", info.slide_id)).unwrap();
    assert_eq!(listed.as_array().unwrap().len(), 1);

    app_api.post_json(&format!("/{job}/outputs/n"), &json!({"type": "integer", "value": 3, "reference": info.slide_id})).unwrap();
    let done: Value = app_api.send("PUT", &format!("/{job}/finalize"), None).map(|b| serde_json::from_slice(&b).unwrap()).unwrap();
    assert_eq!(done["status"], "COMPLETED");
    let sealed = platform.put_bytes(&format!("/v1/overlays/{oid}/tiles/0/0/0"), "application/x-float32-le", &bytes).unwrap_err();
    assert!(matches!(sealed.code, ErrorCode::Sealed | ErrorCode::Unauthorized | ErrorCode::WrongState), "{sealed:?}");
}

#[test]
fn import_anonymizes_over_http() {
    let stack = Stack::start(1);
    let src_dir = tempfile::tempdir().unwrap();
    let img = image::RgbImage::from_fn(300, 200, |x, y| image::Rgb([x as u8, y as u8, 7]));
    let src = src_dir.path().join("patient-Jane-Roe.png");
    img.save(&src).unwrap();
    let api = Client::new(stack.url(), None);
    let r = api.post_json("/v1/slides/import", &json!({"path": src, "case_alias": "CASE-0012"})).unwrap();
    let id = r["slide"]["slide_id"].as_str().or_else(|| r["slide_id"].as_str()).unwrap().to_string();
    let entry = stack.platform.slides.get(id.parse().unwrap()).unwrap();
    let bytes = std::fs::read(&entry.path).unwrap();
    for needle in [&b"CASE-0012"[..], b"patient-Jane-Roe", b"Jane"] {
        assert!(!bytes.windows(needle.len()).any(|w| w == needle));
    }
}
