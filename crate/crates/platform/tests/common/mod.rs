// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use pathharbor::config::Config;
use pathharbor::executor::ExecutorSpec;
use pathharbor::fixtures::fixture_ead;
use pathharbor::orchestrator::AppRecord;
use pathharbor::platform::ServerHandle;
use pathharbor::Platform;

pub fn fixture_exe() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_pathharbor-fixture"))
}

pub fn server_exe() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_pathharbor"))
}

pub struct Stack {
    pub platform: Arc<Platform>,
    pub server: ServerHandle,
    pub dir: tempfile::TempDir,
}

impl Stack {
    pub fn start(workers: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = Config { workers, fsync: false, default_timeout_s: 60, ..Config::for_data_dir(dir.path()) };
        let platform = Platform::open(config).unwrap();
        let server = platform.start().unwrap();
        Stack { platform, server, dir }
    }

    pub fn url(&self) -> String {
        self.server.base_url()
    }

    pub fn register_fixture(&self, name: &str) -> AppRecord {
        let ead = fixture_ead(name).unwrap().to_string();
        let exe = fixture_exe().display().to_string();
        self.platform.orchestrator.register_app(&ead, ExecutorSpec::process(exe, &[name])).unwrap()
    }
}

// ---- kill/restart trials against the server binary ----

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use pathharbor::client::Client;
use pathharbor::fixtures::{tps_ead, write_bundle, TPS_NAMESPACE};
use pathharbor_core::slide::synth::SyntheticSpec;
use pathharbor_core::Id;
use serde_json::{json, Value};

/// Slides plus a slow tps-counter registered in `dir`; returns the slide ids.
pub fn seed_crash_store(dir: &Path, delay_ms: u64) -> Vec<Id> {
    let platform = Platform::open(Config { fsync: true, ..Config::for_data_dir(dir) }).unwrap();
    let slides = (0..2)
        .map(|i| platform.slides.generate(100 + i, &SyntheticSpec::new(512, 512, 3, 5)).unwrap().0.slide_id)
        .collect();
    let delay = delay_ms.to_string();
    let exe = fixture_exe().display().to_string();
    let spec = ExecutorSpec::process(exe, &["tps-counter", "--delay-ms", &delay]);
    let bundle = write_bundle(&dir.join("bundle"), &tps_ead(TPS_NAMESPACE), &spec).unwrap();
    let b = pathharbor::compliance::Bundle::load(&bundle).unwrap();
    platform.orchestrator.register_app(&b.ead_text, b.executor).unwrap();
    slides
}

pub struct ServerProcess {
    pub child: Child,
    pub url: String,
}

/// Spawns `pathharbor server` on a free port and waits for its banner.
pub fn spawn_server(dir: &Path, workers: usize) -> Result<ServerProcess, String> {
    let mut child = Command::new(server_exe())
        .args(["server", "--port", "0", "--workers", &workers.to_string(), "--data-dir"])
        .arg(dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).map_err(|e| e.to_string())?;
    match line.trim().strip_prefix("listening on ") {
        Some(url) => Ok(ServerProcess { child, url: url.to_string() }),
        None => {
            let _ = child.kill();
            let status = child.wait().map_err(|e| e.to_string())?;
            Err(format!("server did not come up ({status})"))
        }
    }
}

impl ServerProcess {
    /// SIGKILL, no shutdown path.
    pub fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Queues `n` ROI jobs through the platform API.
pub fn queue_jobs(url: &str, slides: &[Id], n: usize) -> Result<Vec<Id>, String> {
    let api = Client::new(url, None);
    let apps = api.get_json("/v1/apps").map_err(|e| e.to_string())?;
    let app_id = apps[0]["app_id"].clone();
    let mut ids = Vec::new();
    for i in 0..n {
        let slide = slides[i % slides.len()];
        let created = api.post_json("/v1/jobs", &json!({"app_id": app_id, "mode": "standalone"})).map_err(|e| e.to_string())?;
        let job = created["job"]["job_id"].as_str().unwrap().to_string();
        api.put_json(&format!("/v1/jobs/{job}/inputs/slide"), &json!({"type": "wsi", "id": slide})).map_err(|e| e.to_string())?;
        let roi = json!({"type": "rectangle", "upper_left": [0, 0], "width": 256, "height": 256, "npp_created": 250.0, "reference": slide});
        api.put_json(&format!("/v1/jobs/{job}/inputs/roi"), &roi).map_err(|e| e.to_string())?;
        api.put_json(&format!("/v1/jobs/{job}/run"), &json!({})).map_err(|e| e.to_string())?;
        ids.push(job.parse().unwrap());
    }
    Ok(ids)
}

/// Chops up to `max` bytes off the journal to simulate a torn write.
pub fn tear_journal(dir: &Path, bytes: u64) {
    let path = dir.join("journal.log");
    let len = std::fs::metadata(&path).unwrap().len();
    let f = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
    f.set_len(len.saturating_sub(bytes)).unwrap();
}

/// Invariant violations visible through the platform API after a restart.
pub fn crash_violations(url: &str) -> Result<Vec<String>, String> {
    let api = Client::new(url, None);
    let apps = api.get_json("/v1/apps").map_err(|e| e.to_string())?;
    let outputs: Vec<String> = apps[0]["ead"]["modes"]["standalone"]["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|k| k.as_str().unwrap().to_string())
        .collect();
    let jobs = api.get_json("/v1/jobs").map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    for job in jobs.as_array().unwrap() {
        let id = job["job_id"].as_str().unwrap();
        let status = job["status"].as_str().unwrap();
        match status {
            "SCHEDULED" | "RUNNING" => bad.push(format!("{id} still {status} after restart")),
            "COMPLETED" => {
                let view: Value = api.get_json(&format!("/v1/jobs/{id}")).map_err(|e| e.to_string())?;
                for k in &outputs {
                    if view["output_entities"].get(k).is_none_or(Value::is_null) {
                        bad.push(format!("{id} COMPLETED without {k}"));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(bad)
}

pub struct TrialOutcome {
    pub violations: Vec<String>,
    pub reopened: bool,
    pub statuses: Vec<String>,
}

/// One kill/restart trial: queue jobs, SIGKILL after `kill_after`, maybe
/// tear the journal tail, restart and inspect.
pub fn crash_trial(dir: &Path, slides: &[Id], kill_after: Duration, tear: u64) -> TrialOutcome {
    let server = match spawn_server(dir, 1) {
        Ok(s) => s,
        Err(e) => return TrialOutcome { violations: vec![format!("first start: {e}")], reopened: false, statuses: vec![] },
    };
    let queued = queue_jobs(&server.url, slides, 3);
    std::thread::sleep(kill_after);
    server.kill();
    if tear > 0 {
        tear_journal(dir, tear);
    }
    let mut violations = Vec::new();
    if let Err(e) = queued {
        violations.push(format!("queue: {e}"));
    }
    let server = match spawn_server(dir, 1) {
        Ok(s) => s,
        Err(e) => {
            violations.push(format!("restart: {e}"));
            return TrialOutcome { violations, reopened: false, statuses: vec![] };
        }
    };
    match crash_violations(&server.url) {
        Ok(v) => violations.extend(v),
        Err(e) => violations.push(format!("inspect: {e}")),
    }
    let statuses = Client::new(&server.url, None)
        .get_json("/v1/jobs")
        .map(|j| j.as_array().unwrap().iter().map(|x| x["status"].as_str().unwrap().to_string()).collect())
        .unwrap_or_default();
    server.kill();
    TrialOutcome { violations, reopened: true, statuses }
}
