// SPDX-License-Identifier: Apache-2.0

//! Job orchestrator: app registry, job lifecycle, scope tokens, input
//! binding, output acceptance, executor supervision and preprocessing.
//!
//! All state sits behind one mutex. Every status change is a
//! compare-and-set on the expected status under that lock, and is written
//! to the journal before it becomes visible.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;
use std::process::Child;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex, MutexGuard, RwLock};
use pathharbor_core::model::{
    validate_ead, validate_payload, AppDescription, DataType, EadError, Entity, Mode, ReferenceScope, SlideInfo,
};
use pathharbor_core::Id;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use wait_timeout::ChildExt;

use crate::clock::Clock;
use crate::error::{ApiError, ErrorCode};
use crate::executor::{build_command, ExecutorSpec, LaunchEnv};
use crate::journal::{Journal, Recovery};
use crate::random_id;
use crate::slides::SlideRegistry;
use crate::tokens::{new_secret, hash_secret, Denial, Resource, TokenKind, TokenRecord, TokenStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobStatus {
    Assembly,
    Ready,
    Scheduled,
    Running,
    Completed,
    Failed,
    Timeout,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Completed | JobStatus::Failed | JobStatus::Timeout)
    }
}

/// The only status changes a job may make.
pub const ALLOWED_EDGES: &[(JobStatus, JobStatus)] = &[
    (JobStatus::Assembly, JobStatus::Ready),
    (JobStatus::Ready, JobStatus::Scheduled),
    (JobStatus::Scheduled, JobStatus::Running),
    (JobStatus::Running, JobStatus::Completed),
    (JobStatus::Running, JobStatus::Failed),
    (JobStatus::Running, JobStatus::Timeout),
];

/// Who ended a failed job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureSource {
    /// The app called the failure endpoint.
    App,
    /// The app process exited without finalizing.
    Executor,
    /// The app process could not be started.
    Launch,
    /// The platform restarted while the job was in flight.
    Recovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRecord {
    pub app_id: Id,
    pub namespace: String,
    pub ead: AppDescription,
    pub executor: ExecutorSpec,
    pub registered_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: Id,
    pub app_id: Id,
    pub app_namespace: String,
    pub mode: Mode,
    pub status: JobStatus,
    pub inputs: BTreeMap<String, Id>,
    pub outputs: BTreeMap<String, Id>,
    pub token_id: Id,
    pub created_at_ms: u64,
    pub started_at_ms: Option<u64>,
    pub ended_at_ms: Option<u64>,
    pub failure_message: Option<String>,
    pub failure_source: Option<FailureSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    App(AppRecord),
    Job(Job),
    Entity {
        entity: Entity,
        job_id: Id,
        key: String,
        output: bool,
        content_sha256: String,
    },
    Token(TokenRecord),
    Preprocessing {
        content_sha256: String,
        app_id: Id,
        job_id: Id,
    },
}

/// Everything an app did against the App Interface, for compliance checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct JobActivity {
    /// (key, error code if rejected)
    pub output_attempts: Vec<(String, Option<ErrorCode>)>,
    pub finalize_attempts: Vec<Option<ErrorCode>>,
    pub failure_reports: Vec<String>,
    pub exit_code: Option<i32>,
    pub timed_out: bool,
}

/// Base URLs handed to launched apps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoints {
    pub app_api: String,
    pub slide_api: String,
}

#[derive(Debug, Clone)]
pub struct Settings {
    /// Maximum concurrently running app processes; 0 pauses dispatch.
    pub workers: usize,
    pub default_timeout: Duration,
    pub token_ttl: Duration,
    /// Where work directories and app logs go; none disables logs.
    pub work_dir: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            workers: 2,
            default_timeout: Duration::from_secs(600),
            token_ttl: Duration::from_secs(24 * 3600),
            work_dir: None,
        }
    }
}

struct State {
    journal: Journal,
    apps: Vec<AppRecord>,
    jobs: HashMap<Id, Job>,
    entities: HashMap<Id, Entity>,
    /// nested item id -> top-level entity id
    item_owner: HashMap<Id, Id>,
    tokens: TokenStore,
    /// Clear secrets of jobs not yet launched; memory only.
    pending_secrets: HashMap<Id, String>,
    preprocessing: BTreeMap<(String, Id), Id>,
    output_hashes: HashMap<(Id, String), String>,
    queue: VecDeque<Id>,
    running: usize,
    activity: HashMap<Id, JobActivity>,
}

struct Inner {
    state: Mutex<State>,
    changed: Condvar,
    slides: Arc<SlideRegistry>,
    clock: Arc<dyn Clock>,
    settings: Settings,
    endpoints: RwLock<Option<Endpoints>>,
    crashed: AtomicBool,
}

#[derive(Clone)]
pub struct Orchestrator {
    inner: Arc<Inner>,
}

/// A job plus the documents of its outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobView {
    #[serde(flatten)]
    pub job: Job,
    pub output_entities: BTreeMap<String, Value>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError::new(ErrorCode::BadRequest, msg)
}

impl State {
    fn app(&self, app_id: Id) -> Option<&AppRecord> {
        self.apps.iter().find(|a| a.app_id == app_id)
    }

    fn app_of(&self, job: &Job) -> &AppRecord {
        self.app(job.app_id).expect("jobs reference registered apps")
    }

    fn contains_entity(&self, id: Id) -> bool {
        self.entities.contains_key(&id) || self.item_owner.contains_key(&id)
    }

    fn index_entity(&mut self, entity: Entity) {
        let top = entity.id().expect("stored entities carry ids");
        for id in entity.ids() {
            if id != top {
                self.item_owner.insert(id, top);
            }
        }
        self.entities.insert(top, entity);
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::App(a) => self.apps.push(a),
            Event::Job(j) => {
                self.jobs.insert(j.job_id, j);
            }
            Event::Entity { entity, job_id, key, output, content_sha256 } => {
                if output {
                    self.output_hashes.insert((job_id, key), content_sha256);
                }
                self.index_entity(entity);
            }
            Event::Token(t) => self.tokens.put(t),
            Event::Preprocessing { content_sha256, app_id, job_id } => {
                self.preprocessing.insert((content_sha256, app_id), job_id);
            }
        }
    }

    /// Reference scope of a job: bound slides and the ids of every bound
    /// input and posted output, by key.
    fn scope(&self, job: &Job) -> ReferenceScope {
        let app = self.app_of(job);
        let mut scope = ReferenceScope::default();
        if let Some(t) = self.tokens.get(job.token_id) {
            scope.slides.extend(t.allowed_slides.iter().copied());
        }
        for (key, id) in job.inputs.iter().chain(&job.outputs) {
            match self.entities.get(id) {
                Some(e) => scope.bind_entity(key, e),
                None if app.ead.io.get(key).is_some_and(|s| s.data_type == DataType::Wsi) => scope.bind_slide(key, *id),
                None => {}
            }
        }
        scope
    }
}

impl Orchestrator {
    /// Opens the orchestrator over `journal_path` (or memory when `None`),
    /// replaying history. Jobs caught in flight by a restart are failed.
    pub fn open(
        journal_path: Option<&std::path::Path>,
        fsync: bool,
        slides: Arc<SlideRegistry>,
        clock: Arc<dyn Clock>,
        settings: Settings,
    ) -> Result<(Self, Recovery), ApiError> {
        let (journal, events, recovery) = match journal_path {
            Some(p) => Journal::open::<Event>(p, fsync)?,
            None => (Journal::memory(), Vec::new(), Recovery::default()),
        };
        let mut state = State {
            journal,
            apps: Vec::new(),
            jobs: HashMap::new(),
            entities: HashMap::new(),
            item_owner: HashMap::new(),
            tokens: TokenStore::default(),
            pending_secrets: HashMap::new(),
            preprocessing: BTreeMap::new(),
            output_hashes: HashMap::new(),
            queue: VecDeque::new(),
            running: 0,
            activity: HashMap::new(),
        };
        for e in events {
            state.apply(e);
        }
        let orch = Orchestrator {
            inner: Arc::new(Inner {
                state: Mutex::new(state),
                changed: Condvar::new(),
                slides,
                clock,
                settings,
                endpoints: RwLock::new(None),
                crashed: AtomicBool::new(false),
            }),
        };
        orch.recover()?;
        Ok((orch, recovery))
    }

    /// In-memory orchestrator with default settings.
    pub fn in_memory(slides: Arc<SlideRegistry>, clock: Arc<dyn Clock>, settings: Settings) -> Self {
        Self::open(None, false, slides, clock, settings).expect("memory journal cannot fail").0
    }

    fn recover(&self) -> Result<(), ApiError> {
        let mut st = self.lock();
        let mut stuck: Vec<Id> = st
            .jobs
            .values()
            .filter(|j| matches!(j.status, JobStatus::Scheduled | JobStatus::Running))
            .map(|j| j.job_id)
            .collect();
        stuck.sort();
        for id in stuck {
            let was = st.jobs[&id].status;
            // Recovery bypasses the normal edge set: a scheduled job that
            // never launched is failed as well.
            let mut job = st.jobs[&id].clone();
            job.status = JobStatus::Failed;
            job.ended_at_ms = Some(self.now());
            job.failure_source = Some(FailureSource::Recovery);
            job.failure_message = Some(format!("platform restarted while the job was {was:?}"));
            self.persist(&mut st, &Event::Job(job.clone()))?;
            self.revoke_locked(&mut st, job.token_id)?;
            st.jobs.insert(id, job);
        }
        Ok(())
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.inner.state.lock()
    }

    fn now(&self) -> u64 {
        self.inner.clock.now_ms()
    }

    fn persist(&self, st: &mut State, event: &Event) -> Result<(), ApiError> {
        if self.inner.crashed.load(Ordering::SeqCst) {
            return Err(ApiError::internal("platform is stopped"));
        }
        st.journal.append(event).map_err(ApiError::internal)
    }

    pub fn slides(&self) -> &Arc<SlideRegistry> {
        &self.inner.slides
    }

    pub fn settings(&self) -> &Settings {
        &self.inner.settings
    }

    pub fn set_endpoints(&self, endpoints: Endpoints) {
        *self.inner.endpoints.write() = Some(endpoints);
    }

    /// Stops all persistence and kills app processes, as if the process had
    /// died. Used to exercise crash recovery in-process.
    pub fn simulate_crash(&self) {
        self.inner.crashed.store(true, Ordering::SeqCst);
        self.inner.changed.notify_all();
    }

    // ---- apps ----

    pub fn register_app(&self, ead_document: &str, executor: ExecutorSpec) -> Result<AppRecord, ApiError> {
        let report = validate_ead(ead_document).map_err(|e| match e {
            EadError::MalformedDocument(m) => ApiError::new(ErrorCode::InvalidEad, format!("MALFORMED_DOCUMENT: {m}")),
            EadError::Invalid(v) => ApiError::new(ErrorCode::InvalidEad, "App Description has violations")
                .with_details(json!({ "violations": v })),
        })?;
        if !report.is_ok() {
            return Err(ApiError::new(ErrorCode::InvalidEad, "App Description has violations")
                .with_details(json!({ "violations": report.violations })));
        }
        let ead = report.ead.expect("ok report carries the description");
        executor.validate().map_err(|m| ApiError::new(ErrorCode::InvalidExecutor, m))?;
        let mut st = self.lock();
        if st.apps.iter().any(|a| a.namespace == ead.namespace) {
            return Err(ApiError::new(
                ErrorCode::DuplicateNamespace,
                format!("{} is already registered", ead.namespace),
            ));
        }
        let record = AppRecord {
            app_id: random_id(),
            namespace: ead.namespace.clone(),
            ead,
            executor,
            registered_at_ms: self.now(),
        };
        self.persist(&mut st, &Event::App(record.clone()))?;
        st.apps.push(record.clone());
        Ok(record)
    }

    pub fn apps(&self) -> Vec<AppRecord> {
        self.lock().apps.clone()
    }

    pub fn app(&self, app_id: Id) -> Option<AppRecord> {
        self.lock().app(app_id).cloned()
    }

    pub fn app_by_namespace(&self, namespace: &str) -> Option<AppRecord> {
        self.lock().apps.iter().find(|a| a.namespace == namespace).cloned()
    }

    // ---- jobs ----

    /// Creates a job in ASSEMBLY and returns it with the token secret. The
    /// secret is not retrievable later.
    pub fn create_job(&self, app_id: Id, mode: Mode) -> Result<(Job, String), ApiError> {
        let mut st = self.lock();
        let app = st.app(app_id).ok_or_else(|| ApiError::new(ErrorCode::UnknownApp, format!("no app {app_id}")))?;
        if app.ead.mode(mode).is_none() {
            return Err(ApiError::new(
                ErrorCode::UnsupportedMode,
                format!("{} has no {mode} mode", app.namespace),
            ));
        }
        let namespace = app.namespace.clone();
        let now = self.now();
        let job_id = random_id();
        let ttl = self.inner.settings.token_ttl.as_millis() as u64;
        let (token, secret) = st.tokens.issue(TokenKind::Job, Some(job_id), now, ttl);
        let job = Job {
            job_id,
            app_id,
            app_namespace: namespace,
            mode,
            status: JobStatus::Assembly,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            token_id: token.token_id,
            created_at_ms: now,
            started_at_ms: None,
            ended_at_ms: None,
            failure_message: None,
            failure_source: None,
        };
        self.persist(&mut st, &Event::Token(token))?;
        self.persist(&mut st, &Event::Job(job.clone()))?;
        st.jobs.insert(job_id, job.clone());
        st.pending_secrets.insert(job_id, secret.clone());
        Ok((job, secret))
    }

    pub fn job(&self, job_id: Id) -> Option<Job> {
        self.lock().jobs.get(&job_id).cloned()
    }

    pub fn jobs(&self) -> Vec<Job> {
        let mut v: Vec<Job> = self.lock().jobs.values().cloned().collect();
        v.sort_by_key(|j| (j.created_at_ms, j.job_id));
        v
    }

    pub fn job_view(&self, job_id: Id) -> Option<JobView> {
        let st = self.lock();
        let job = st.jobs.get(&job_id)?.clone();
        let output_entities = job
            .outputs
            .iter()
            .filter_map(|(k, id)| st.entities.get(id).map(|e| (k.clone(), e.to_json())))
            .collect();
        Some(JobView { job, output_entities })
    }

    pub fn entity(&self, id: Id) -> Option<Entity> {
        self.lock().entities.get(&id).cloned()
    }

    pub fn activity(&self, job_id: Id) -> JobActivity {
        self.lock().activity.get(&job_id).cloned().unwrap_or_default()
    }

    pub fn audit_log(&self) -> Vec<Denial> {
        self.lock().tokens.audit_log().to_vec()
    }

    pub fn token(&self, token_id: Id) -> Option<TokenRecord> {
        self.lock().tokens.get(token_id).cloned()
    }

    fn transition(
        &self,
        st: &mut State,
        job_id: Id,
        from: JobStatus,
        to: JobStatus,
        update: impl FnOnce(&mut Job),
    ) -> Result<Job, ApiError> {
        let job = st.jobs.get(&job_id).ok_or_else(|| ApiError::not_found(format!("job {job_id}")))?;
        if job.status != from {
            return Err(ApiError::wrong_state(format!("job is {:?}, expected {from:?}", job.status)));
        }
        debug_assert!(ALLOWED_EDGES.contains(&(from, to)));
        let mut next = job.clone();
        next.status = to;
        update(&mut next);
        if to.is_terminal() {
            next.ended_at_ms = Some(self.now());
        }
        self.persist(st, &Event::Job(next.clone()))?;
        st.jobs.insert(job_id, next.clone());
        if to.is_terminal() {
            self.revoke_locked(st, next.token_id)?;
            st.pending_secrets.remove(&job_id);
        }
        self.inner.changed.notify_all();
        Ok(next)
    }

    fn revoke_locked(&self, st: &mut State, token_id: Id) -> Result<(), ApiError> {
        if let Some(mut t) = st.tokens.get(token_id).cloned() {
            if !t.revoked {
                t.revoked = true;
                self.persist(st, &Event::Token(t.clone()))?;
                st.tokens.put(t);
            }
        }
        Ok(())
    }

    /// Binds an input. `body` is either `{"type": "wsi", "id": <slide>}` or
    /// an entity document.
    pub fn bind_input(&self, job_id: Id, key: &str, body: &Value) -> Result<Job, ApiError> {
        let mut st = self.lock();
        let job = st.jobs.get(&job_id).cloned().ok_or_else(|| ApiError::not_found(format!("job {job_id}")))?;
        if job.status != JobStatus::Assembly {
            return Err(ApiError::wrong_state(format!("inputs can only be bound in ASSEMBLY, job is {:?}", job.status)));
        }
        let app = st.app_of(&job).clone();
        let mode = app.ead.mode(job.mode).expect("job mode exists");
        if !mode.inputs.iter().any(|k| k == key) {
            return Err(ApiError::new(ErrorCode::UnknownKey, format!("{key:?} is not an input of {} mode", job.mode)));
        }
        let spec = &app.ead.io[key];
        let bound_id = if body.get("type").and_then(Value::as_str) == Some("wsi") {
            if spec.data_type != DataType::Wsi {
                return Err(ApiError::new(ErrorCode::TypeMismatch, format!("expected {}, found wsi", spec.data_type)));
            }
            let id: Id = body
                .get("id")
                .and_then(Value::as_str)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad_request("wsi binding needs an \"id\""))?;
            if !self.inner.slides.contains(id) {
                return Err(ApiError::not_found(format!("slide {id}")));
            }
            id
        } else {
            let raw = serde_json::to_vec(body).map_err(ApiError::internal)?;
            let mut entity: Entity = serde_json::from_value(body.clone())
                .map_err(|e| ApiError::new(ErrorCode::TypeMismatch, format!("not an entity document: {e}")))?;
            if spec.data_type == DataType::Wsi {
                return Err(ApiError::new(ErrorCode::TypeMismatch, format!("expected wsi, found {}", entity.data_type())));
            }
            let hash = sha256_hex(&raw);
            entity.assign_missing_ids(&[job_id.as_bytes().as_slice(), b"in:", key.as_bytes(), hash.as_bytes()].concat());
            // Validate against the job's slide, or the slide the entity's
            // annotations reference when no slide is bound yet.
            let mut scope = st.scope(&job);
            let slide = self.validation_slide(&st, &job, Some(&entity), &mut scope)?;
            validate_payload(&app.ead, key, &entity, &slide, &scope)?;
            if let Some(dup) = entity.ids().into_iter().find(|id| st.contains_entity(*id)) {
                return Err(ApiError::new(ErrorCode::DuplicateId, format!("id {dup} already exists")));
            }
            let id = entity.id().expect("ids assigned");
            self.persist(
                &mut st,
                &Event::Entity { entity: entity.clone(), job_id, key: key.into(), output: false, content_sha256: hash },
            )?;
            st.index_entity(entity);
            id
        };
        let mut next = job.clone();
        next.inputs.insert(key.to_string(), bound_id);
        self.persist(&mut st, &Event::Job(next.clone()))?;
        st.jobs.insert(job_id, next.clone());
        if mode.inputs.iter().all(|k| next.inputs.contains_key(k)) {
            // Fix the token scope to the slides reachable from the inputs.
            let slides = self.reachable_slides(&st, &next);
            let outputs: BTreeSet<String> = mode.outputs.iter().cloned().collect();
            if let Some(mut t) = st.tokens.get(next.token_id).cloned() {
                t.allowed_slides = slides;
                t.allowed_output_keys = outputs;
                self.persist(&mut st, &Event::Token(t.clone()))?;
                st.tokens.put(t);
            }
            next = self.transition(&mut st, job_id, JobStatus::Assembly, JobStatus::Ready, |_| {})?;
        }
        self.inner.changed.notify_all();
        Ok(next)
    }

    fn reachable_slides(&self, st: &State, job: &Job) -> BTreeSet<Id> {
        let mut out = BTreeSet::new();
        for id in job.inputs.values() {
            if self.inner.slides.contains(*id) {
                out.insert(*id);
            }
            if let Some(e) = st.entities.get(id) {
                e.visit(&mut |x| {
                    if let Some(r) = x.reference() {
                        if self.inner.slides.contains(r) {
                            out.insert(r);
                        }
                    }
                });
            }
        }
        out
    }

    /// The slide payloads of `job` are checked against: its first bound wsi
    /// input, else the slide referenced by `entity`.
    fn validation_slide(
        &self,
        st: &State,
        job: &Job,
        entity: Option<&Entity>,
        scope: &mut ReferenceScope,
    ) -> Result<SlideInfo, ApiError> {
        let app = st.app_of(job);
        let mode = app.ead.mode(job.mode).expect("job mode exists");
        let bound = mode
            .inputs
            .iter()
            .filter(|k| app.ead.io[*k].data_type == DataType::Wsi)
            .find_map(|k| job.inputs.get(k).copied());
        if let Some(id) = bound {
            return self.inner.slides.info(id).ok_or_else(|| ApiError::internal(format!("bound slide {id} vanished")));
        }
        let mut referenced = None;
        if let Some(e) = entity {
            e.visit(&mut |x| {
                if let (Entity::Annotation(a), None) = (x, referenced) {
                    referenced = Some(a.reference);
                }
            });
        }
        match referenced {
            Some(id) => {
                let info = self.inner.slides.info(id).ok_or_else(|| ApiError::not_found(format!("slide {id}")))?;
                scope.slides.insert(id);
                Ok(info)
            }
            // Nothing spatial to check against.
            None => Ok(SlideInfo::new(Id::from_bytes([0; 16]), 1, 1, 256, 1)),
        }
    }

    /// READY -> SCHEDULED; the job is launched when a worker is free.
    pub fn start_job(&self, job_id: Id) -> Result<Job, ApiError> {
        let mut st = self.lock();
        let job = self.transition(&mut st, job_id, JobStatus::Ready, JobStatus::Scheduled, |_| {})?;
        st.queue.push_back(job_id);
        self.pump(&mut st);
        Ok(st.jobs[&job.job_id].clone())
    }

    /// Launches queued jobs while workers are free.
    fn pump(&self, st: &mut State) {
        while st.running < self.inner.settings.workers {
            let Some(job_id) = st.queue.pop_front() else { break };
            if st.jobs.get(&job_id).map(|j| j.status) != Some(JobStatus::Scheduled) {
                continue;
            }
            self.launch(st, job_id);
        }
    }

    fn launch(&self, st: &mut State, job_id: Id) {
        let job = st.jobs[&job_id].clone();
        let app = st.app_of(&job).clone();
        let timeout = app.executor.timeout_s.map_or(self.inner.settings.default_timeout, Duration::from_secs);
        let fail = |st: &mut State, msg: String| {
            let _ = self.transition(st, job_id, JobStatus::Scheduled, JobStatus::Running, |j| {
                j.started_at_ms = Some(self.now());
            });
            let _ = self.transition(st, job_id, JobStatus::Running, JobStatus::Failed, |j| {
                j.failure_source = Some(FailureSource::Launch);
                j.failure_message = Some(format!("EXECUTOR_LAUNCH_FAILED: {msg}"));
            });
        };
        let Some(endpoints) = self.inner.endpoints.read().clone() else {
            return fail(st, "no API endpoint configured".into());
        };
        let secret = match st.pending_secrets.remove(&job_id) {
            Some(s) => s,
            None => {
                // Secret lost across a restart: rotate it.
                let s = new_secret();
                if let Some(mut t) = st.tokens.get(job.token_id).cloned() {
                    t.secret_sha256 = hash_secret(&s);
                    if self.persist(st, &Event::Token(t.clone())).is_err() {
                        return;
                    }
                    st.tokens.put(t);
                }
                s
            }
        };
        let env = LaunchEnv {
            job_id: job_id.to_string(),
            token: secret,
            app_api: endpoints.app_api,
            slide_api: endpoints.slide_api,
        };
        let (workdir, log) = match &self.inner.settings.work_dir {
            Some(base) => {
                let dir = base.join(job_id.to_string());
                let _ = std::fs::create_dir_all(&dir);
                let log = std::fs::File::create(dir.join("app.log")).ok();
                (dir, log)
            }
            None => (std::env::temp_dir(), None),
        };
        let Some(mut cmd) = build_command(&app.executor, &env, &workdir, log) else {
            // External adapter: nothing to launch.
            let _ = self.transition(st, job_id, JobStatus::Scheduled, JobStatus::Running, |j| {
                j.started_at_ms = Some(self.now());
            });
            st.pending_secrets.insert(job_id, env.token);
            let this = self.clone();
            std::thread::spawn(move || this.expire_after(job_id, timeout));
            return;
        };
        match cmd.spawn() {
            Ok(child) => {
                if self
                    .transition(st, job_id, JobStatus::Scheduled, JobStatus::Running, |j| {
                        j.started_at_ms = Some(self.now());
                    })
                    .is_err()
                {
                    let mut child = child;
                    let _ = child.kill();
                    let _ = child.wait();
                    return;
                }
                st.running += 1;
                let this = self.clone();
                std::thread::spawn(move || this.supervise(job_id, child, Instant::now() + timeout));
            }
            Err(e) => fail(st, format!("{}: {e}", app.executor.command)),
        }
    }

    fn supervise(&self, job_id: Id, mut child: Child, deadline: Instant) {
        let exit = loop {
            match child.wait_timeout(Duration::from_millis(25)) {
                Ok(Some(status)) => break Some(status.code()),
                Ok(None) => {
                    if self.inner.crashed.load(Ordering::SeqCst) {
                        let _ = child.kill();
                        let _ = child.wait();
                        return;
                    }
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        break None;
                    }
                }
                Err(_) => break Some(None),
            }
        };
        if self.inner.crashed.load(Ordering::SeqCst) {
            return;
        }
        let mut st = self.lock();
        st.running = st.running.saturating_sub(1);
        let activity = st.activity.entry(job_id).or_default();
        match exit {
            None => {
                activity.timed_out = true;
                let _ = self.transition(&mut st, job_id, JobStatus::Running, JobStatus::Timeout, |_| {});
            }
            Some(code) => {
                activity.exit_code = code;
                let _ = self.transition(&mut st, job_id, JobStatus::Running, JobStatus::Failed, |j| {
                    j.failure_source = Some(FailureSource::Executor);
                    j.failure_message = Some(match code {
                        Some(c) => format!("app exited with status {c} without finalizing"),
                        None => "app was killed by a signal without finalizing".into(),
                    });
                });
            }
        }
        self.pump(&mut st);
        self.inner.changed.notify_all();
    }

    fn expire_after(&self, job_id: Id, timeout: Duration) {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            if st.jobs.get(&job_id).is_none_or(|j| j.status.is_terminal()) || self.inner.crashed.load(Ordering::SeqCst) {
                return;
            }
            let now = Instant::now();
            if now >= deadline {
                st.activity.entry(job_id).or_default().timed_out = true;
                let _ = self.transition(&mut st, job_id, JobStatus::Running, JobStatus::Timeout, |_| {});
                return;
            }
            self.inner.changed.wait_for(&mut st, deadline - now);
        }
    }

    /// Blocks until the job is terminal or `timeout` passes.
    pub fn wait_terminal(&self, job_id: Id, timeout: Duration) -> Option<Job> {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            let job = st.jobs.get(&job_id)?.clone();
            let now = Instant::now();
            if job.status.is_terminal() || now >= deadline || self.inner.crashed.load(Ordering::SeqCst) {
                return Some(job);
            }
            self.inner.changed.wait_for(&mut st, (deadline - now).min(Duration::from_millis(200)));
        }
    }

    // ---- authorization ----

    pub fn authorize(&self, secret: Option<&str>, resource: &Resource) -> Result<TokenRecord, ApiError> {
        let now = self.now();
        self.lock()
            .tokens
            .authorize(secret, resource, now)
            .map_err(|d| ApiError::unauthorized(format!("{}: {}", d.resource, d.reason)))
    }

    /// Issues a viewer token scoped to one slide.
    pub fn issue_viewer_token(&self, slide_id: Id) -> Result<(TokenRecord, String), ApiError> {
        if !self.inner.slides.contains(slide_id) {
            return Err(ApiError::not_found(format!("slide {slide_id}")));
        }
        let mut st = self.lock();
        let ttl = self.inner.settings.token_ttl.as_millis() as u64;
        let (mut token, secret) = st.tokens.issue(TokenKind::Viewer, None, self.now(), ttl);
        token.allowed_slides.insert(slide_id);
        self.persist(&mut st, &Event::Token(token.clone()))?;
        st.tokens.put(token.clone());
        Ok((token, secret))
    }

    /// Checks an App Interface call: the token must belong to this job.
    /// A revoked token of a finished job yields WRONG_STATE, not
    /// UNAUTHORIZED, so repeated terminal calls are reported as such.
    fn app_call<'a>(&self, st: &'a mut State, secret: Option<&str>, job_id: Id) -> Result<&'a Job, ApiError> {
        let own = st
            .jobs
            .get(&job_id)
            .and_then(|j| st.tokens.get(j.token_id))
            .is_some_and(|t| secret.is_some_and(|s| hash_secret(s) == t.secret_sha256));
        let terminal = st.jobs.get(&job_id).is_some_and(|j| j.status.is_terminal());
        if !(own && terminal) {
            st.tokens
                .authorize(secret, &Resource::JobData(job_id), self.inner.clock.now_ms())
                .map_err(|d| ApiError::unauthorized(format!("{}: {}", d.resource, d.reason)))?;
        }
        Ok(&st.jobs[&job_id])
    }

    // ---- App Interface ----

    pub fn input_document(&self, secret: Option<&str>, job_id: Id, key: &str) -> Result<Value, ApiError> {
        let mut st = self.lock();
        let job = self.app_call(&mut st, secret, job_id)?.clone();
        if job.status.is_terminal() {
            return Err(ApiError::new(ErrorCode::WrongState, format!("job is {:?}; its token is no longer valid", job.status)));
        }
        let id = *job
            .inputs
            .get(key)
            .ok_or_else(|| ApiError::new(ErrorCode::UnknownKey, format!("no input bound under {key:?}")))?;
        if let Some(e) = st.entities.get(&id) {
            return Ok(e.to_json());
        }
        let info = self.inner.slides.info(id).ok_or_else(|| ApiError::not_found(format!("slide {id}")))?;
        let mut doc = serde_json::to_value(&info).map_err(ApiError::internal)?;
        doc["type"] = json!("wsi");
        doc["id"] = json!(id);
        Ok(doc)
    }

    /// Accepts one output. Identical bodies re-posted for the same key
    /// return the stored entity.
    pub fn post_output(&self, secret: Option<&str>, job_id: Id, key: &str, body: &[u8]) -> Result<Value, ApiError> {
        let mut st = self.lock();
        let result = self.post_output_locked(&mut st, secret, job_id, key, body);
        if st.jobs.contains_key(&job_id) && !matches!(&result, Err(e) if e.code == ErrorCode::Unauthorized) {
            let outcome = result.as_ref().err().map(|e| e.code);
            st.activity.entry(job_id).or_default().output_attempts.push((key.to_string(), outcome));
        }
        result
    }

    fn post_output_locked(
        &self,
        st: &mut State,
        secret: Option<&str>,
        job_id: Id,
        key: &str,
        body: &[u8],
    ) -> Result<Value, ApiError> {
        let job = self.app_call(st, secret, job_id)?.clone();
        if job.status != JobStatus::Running {
            return Err(ApiError::wrong_state(format!("outputs are accepted while RUNNING, job is {:?}", job.status)));
        }
        let app = st.app_of(&job).clone();
        let mode = app.ead.mode(job.mode).expect("job mode exists");
        if !mode.outputs.iter().any(|k| k == key) {
            return Err(ApiError::new(ErrorCode::UnknownKey, format!("{key:?} is not an output of {} mode", job.mode)));
        }
        let hash = sha256_hex(body);
        if let Some(previous) = st.output_hashes.get(&(job_id, key.to_string())) {
            if *previous == hash {
                let id = job.outputs[key];
                return Ok(st.entities[&id].to_json());
            }
            return Err(ApiError::new(ErrorCode::AlreadyPosted, format!("a different {key:?} was already posted")));
        }
        let mut entity: Entity = serde_json::from_slice(body)
            .map_err(|e| ApiError::new(ErrorCode::TypeMismatch, format!("not an entity document: {e}")))?;
        entity.assign_missing_ids(&[job_id.as_bytes().as_slice(), b"out:", key.as_bytes(), hash.as_bytes()].concat());
        let mut scope = st.scope(&job);
        let slide = self.validation_slide(st, &job, None, &mut scope)?;
        validate_payload(&app.ead, key, &entity, &slide, &scope)?;
        if let Some(dup) = entity.ids().into_iter().find(|id| st.contains_entity(*id)) {
            return Err(ApiError::new(ErrorCode::DuplicateId, format!("id {dup} already exists")));
        }
        let id = entity.id().expect("ids assigned");
        self.persist(
            st,
            &Event::Entity { entity: entity.clone(), job_id, key: key.into(), output: true, content_sha256: hash.clone() },
        )?;
        let mut next = job.clone();
        next.outputs.insert(key.to_string(), id);
        self.persist(st, &Event::Job(next.clone()))?;
        let doc = entity.to_json();
        st.index_entity(entity);
        st.output_hashes.insert((job_id, key.to_string()), hash);
        st.jobs.insert(job_id, next);
        Ok(doc)
    }

    pub fn finalize(&self, secret: Option<&str>, job_id: Id) -> Result<Job, ApiError> {
        let mut st = self.lock();
        let result = (|| {
            let job = self.app_call(&mut st, secret, job_id)?.clone();
            if job.status != JobStatus::Running {
                return Err(ApiError::wrong_state(format!("job is {:?}", job.status)));
            }
            let app = st.app_of(&job);
            let missing: Vec<String> = app.ead.mode(job.mode).expect("job mode exists")
                .outputs
                .iter()
                .filter(|k| !job.outputs.contains_key(*k))
                .cloned()
                .collect();
            if !missing.is_empty() {
                return Err(ApiError::new(ErrorCode::MissingOutput, format!("missing outputs: {}", missing.join(", ")))
                    .with_details(json!({ "missing": missing })));
            }
            self.transition(&mut st, job_id, JobStatus::Running, JobStatus::Completed, |_| {})
        })();
        if st.jobs.contains_key(&job_id) && !matches!(&result, Err(e) if e.code == ErrorCode::Unauthorized) {
            let outcome = result.as_ref().err().map(|e| e.code);
            st.activity.entry(job_id).or_default().finalize_attempts.push(outcome);
        }
        result
    }

    pub fn fail(&self, secret: Option<&str>, job_id: Id, message: &str) -> Result<Job, ApiError> {
        let mut st = self.lock();
        let job = self.app_call(&mut st, secret, job_id)?.clone();
        st.activity.entry(job_id).or_default().failure_reports.push(message.to_string());
        if job.status != JobStatus::Running {
            return Err(ApiError::wrong_state(format!("job is {:?}", job.status)));
        }
        self.transition(&mut st, job_id, JobStatus::Running, JobStatus::Failed, |j| {
            j.failure_source = Some(FailureSource::App);
            j.failure_message = Some(message.to_string());
        })
    }

    // ---- preprocessing ----

    /// Creates, binds and starts one preprocessing job per app with a
    /// preprocessing mode, at most once per (slide content, app). Returns
    /// all jobs in registration order with a flag telling whether each was
    /// created by this call.
    pub fn enqueue_preprocessing(&self, slide_id: Id) -> Result<Vec<(Job, bool)>, ApiError> {
        let entry = self.inner.slides.get(slide_id).ok_or_else(|| ApiError::not_found(format!("slide {slide_id}")))?;
        let apps: Vec<AppRecord> =
            self.apps().into_iter().filter(|a| a.ead.mode(Mode::Preprocessing).is_some()).collect();
        let mut out = Vec::new();
        for app in apps {
            let key = (entry.content_sha256.clone(), app.app_id);
            let existing = self.lock().preprocessing.get(&key).copied();
            if let Some(job_id) = existing {
                out.push((self.job(job_id).expect("recorded jobs exist"), false));
                continue;
            }
            let (job, _) = self.create_job(app.app_id, Mode::Preprocessing)?;
            {
                let mut st = self.lock();
                self.persist(
                    &mut st,
                    &Event::Preprocessing { content_sha256: key.0.clone(), app_id: app.app_id, job_id: job.job_id },
                )?;
                st.preprocessing.insert(key, job.job_id);
            }
            let spec = app.ead.mode(Mode::Preprocessing).expect("filtered");
            let wsi_key = spec.inputs.iter().find(|k| app.ead.io[*k].data_type == DataType::Wsi).expect("validated EAD");
            let job = self.bind_input(job.job_id, wsi_key, &json!({ "type": "wsi", "id": slide_id }))?;
            let job = if job.status == JobStatus::Ready { self.start_job(job.job_id)? } else { job };
            out.push((job, true));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use pathharbor_core::slide::synth::SyntheticSpec;

    fn ead() -> String {
        json!({
            "schema_version": "1.0",
            "namespace": "org.example.unit.v1",
            "name": "unit",
            "modes": {"standalone": {"inputs": ["slide", "roi"], "outputs": ["count", "score"]}},
            "io": {
                "slide": {"type": "wsi"},
                "roi": {"type": "rectangle"},
                "count": {"type": "integer", "reference_to": "inputs.roi"},
                "score": {"type": "float"}
            }
        })
        .to_string()
    }

    struct Fixture {
        _dir: tempfile::TempDir,
        orch: Orchestrator,
        clock: Arc<ManualClock>,
        slide: SlideInfo,
        app: AppRecord,
    }

    fn fixture() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let slides = Arc::new(SlideRegistry::open(dir.path()).unwrap());
        let (slide, _) = slides.generate(1, &SyntheticSpec::new(512, 512, 1, 1)).unwrap();
        let clock = Arc::new(ManualClock::new(1_000));
        let orch = Orchestrator::in_memory(slides, clock.clone(), Settings::default());
        let app = orch.register_app(&ead(), ExecutorSpec::external()).unwrap();
        Fixture { _dir: dir, orch, clock, slide, app }
    }

    fn roi(slide: Id) -> Value {
        json!({"type": "rectangle", "upper_left": [0, 0], "width": 512, "height": 512, "npp_created": 250.0, "reference": slide})
    }

    fn running(f: &Fixture) -> (Job, String, Id) {
        let (job, secret) = f.orch.create_job(f.app.app_id, Mode::Standalone).unwrap();
        f.orch.bind_input(job.job_id, "slide", &json!({"type": "wsi", "id": f.slide.slide_id})).unwrap();
        let j = f.orch.bind_input(job.job_id, "roi", &roi(f.slide.slide_id)).unwrap();
        assert_eq!(j.status, JobStatus::Ready);
        f.orch.set_endpoints(Endpoints { app_api: "http://x/app/v1".into(), slide_api: "http://x/v1".into() });
        let j = f.orch.start_job(job.job_id).unwrap();
        assert_eq!(j.status, JobStatus::Running);
        let roi_id = j.inputs["roi"];
        (j, secret, roi_id)
    }

    #[test]
    fn registration_rules() {
        let f = fixture();
        assert_eq!(f.orch.register_app(&ead(), ExecutorSpec::external()).unwrap_err().code, ErrorCode::DuplicateNamespace);
        let v2 = ead().replace("unit.v1", "unit.v2");
        assert!(f.orch.register_app(&v2, ExecutorSpec::external()).is_ok());
        let bad = ead().replace("inputs.roi", "inputs.missing_key");
        let err = f.orch.register_app(&bad.replace("unit.v1", "unit.v3"), ExecutorSpec::external()).unwrap_err();
        assert_eq!(err.code, ErrorCode::InvalidEad);
        assert!(err.details.unwrap().to_string().contains("DANGLING_REFERENCE"));
    }

    #[test]
    fn create_and_bind_errors() {
        let f = fixture();
        assert_eq!(f.orch.create_job(f.app.app_id, Mode::Preprocessing).unwrap_err().code, ErrorCode::UnsupportedMode);
        assert_eq!(f.orch.create_job(random_id(), Mode::Standalone).unwrap_err().code, ErrorCode::UnknownApp);
        let (a, sa) = f.orch.create_job(f.app.app_id, Mode::Standalone).unwrap();
        let (b, sb) = f.orch.create_job(f.app.app_id, Mode::Standalone).unwrap();
        assert_ne!((a.job_id, sa), (b.job_id, sb));
        let polygon = json!({"type": "polygon", "coordinates": [[0,0],[5,0],[5,5]], "npp_created": 1.0, "reference": f.slide.slide_id});
        assert_eq!(f.orch.bind_input(a.job_id, "roi", &polygon).unwrap_err().code, ErrorCode::TypeMismatch);
        assert_eq!(f.orch.bind_input(a.job_id, "nope", &polygon).unwrap_err().code, ErrorCode::UnknownKey);
        assert_eq!(
            f.orch.bind_input(a.job_id, "slide", &json!({"type": "wsi", "id": random_id()})).unwrap_err().code,
            ErrorCode::NotFound
        );
        assert_eq!(f.orch.start_job(a.job_id).unwrap_err().code, ErrorCode::WrongState);
    }

    #[test]
    fn outputs_finalize_and_idempotency() {
        let f = fixture();
        let (job, secret, roi_id) = running(&f);
        let s = Some(secret.as_str());
        let count = json!({"type": "integer", "value": 3, "reference": roi_id}).to_string();
        let first = f.orch.post_output(s, job.job_id, "count", count.as_bytes()).unwrap();
        let again = f.orch.post_output(s, job.job_id, "count", count.as_bytes()).unwrap();
        assert_eq!(first, again);
        let other = json!({"type": "integer", "value": 4, "reference": roi_id}).to_string();
        assert_eq!(f.orch.post_output(s, job.job_id, "count", other.as_bytes()).unwrap_err().code, ErrorCode::AlreadyPosted);
        let err = f.orch.finalize(s, job.job_id).unwrap_err();
        assert_eq!(err.code, ErrorCode::MissingOutput);
        assert!(err.message.contains("score"));
        let bad_ref = json!({"type": "float", "value": 1.0, "reference": random_id()}).to_string();
        assert_eq!(f.orch.post_output(s, job.job_id, "score", bad_ref.as_bytes()).unwrap_err().code, ErrorCode::BadReference);
        let score = json!({"type": "float", "value": 30.0}).to_string();
        f.orch.post_output(s, job.job_id, "score", score.as_bytes()).unwrap();
        assert_eq!(f.orch.finalize(s, job.job_id).unwrap().status, JobStatus::Completed);
        assert_eq!(f.orch.finalize(s, job.job_id).unwrap_err().code, ErrorCode::WrongState);
        // token is dead for resources after completion
        assert!(f.orch.authorize(s, &Resource::Slide(f.slide.slide_id)).is_err());
        let act = f.orch.activity(job.job_id);
        assert_eq!(act.output_attempts.len(), 5);
        assert_eq!(act.finalize_attempts.len(), 3);
    }

    #[test]
    fn fail_and_foreign_tokens() {
        let f = fixture();
        let (a, sa, _) = running(&f);
        let (b, sb, roi_b) = running(&f);
        let count = json!({"type": "integer", "value": 3, "reference": roi_b}).to_string();
        assert_eq!(f.orch.post_output(Some(&sa), b.job_id, "count", count.as_bytes()).unwrap_err().code, ErrorCode::Unauthorized);
        assert!(f.orch.post_output(Some(&sb), b.job_id, "count", count.as_bytes()).is_ok());
        let failed = f.orch.fail(Some(&sa), a.job_id, "OOM").unwrap();
        assert_eq!((failed.status, failed.failure_message.as_deref()), (JobStatus::Failed, Some("OOM")));
        assert_eq!(failed.failure_source, Some(FailureSource::App));
        assert!(f.orch.audit_log().iter().any(|d| d.job_id == Some(a.job_id)));
    }

    #[test]
    fn token_expiry() {
        let f = fixture();
        let (_, secret, _) = running(&f);
        assert!(f.orch.authorize(Some(&secret), &Resource::Slide(f.slide.slide_id)).is_ok());
        f.clock.advance(Duration::from_secs(24 * 3600));
        assert!(f.orch.authorize(Some(&secret), &Resource::Slide(f.slide.slide_id)).is_err());
    }

    #[test]
    fn recovery_fails_in_flight_jobs() {
        let dir = tempfile::tempdir().unwrap();
        let slides = Arc::new(SlideRegistry::open(dir.path()).unwrap());
        let (slide, _) = slides.generate(1, &SyntheticSpec::new(512, 512, 1, 1)).unwrap();
        let journal = dir.path().join("journal.log");
        let settings = Settings { workers: 0, ..Settings::default() };
        let clock: Arc<dyn Clock> = Arc::new(ManualClock::new(0));
        let job_id = {
            let (o, _) = Orchestrator::open(Some(&journal), false, slides.clone(), clock.clone(), settings.clone()).unwrap();
            let app = o.register_app(&ead(), ExecutorSpec::external()).unwrap();
            let (job, _) = o.create_job(app.app_id, Mode::Standalone).unwrap();
            o.bind_input(job.job_id, "slide", &json!({"type": "wsi", "id": slide.slide_id})).unwrap();
            o.bind_input(job.job_id, "roi", &roi(slide.slide_id)).unwrap();
            assert_eq!(o.start_job(job.job_id).unwrap().status, JobStatus::Scheduled);
            o.simulate_crash();
            job.job_id
        };
        let (o, rec) = Orchestrator::open(Some(&journal), false, slides, clock, settings).unwrap();
        assert_eq!(rec.truncated_bytes, 0);
        let job = o.job(job_id).unwrap();
        assert_eq!(job.status, JobStatus::Failed);
        assert_eq!(job.failure_source, Some(FailureSource::Recovery));
        assert_eq!(o.job_view(job_id).unwrap().output_entities.len(), 0);
    }
}
