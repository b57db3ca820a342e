// SPDX-License-Identifier: Apache-2.0

//! One platform instance: slide registry, orchestrator and overlay store
//! over a data directory, plus the HTTP server that exposes them.
//!
//! Data directory layout:
//!
//! ```text
//! <data_dir>/slides/              slide containers and ground truth sheets
//! <data_dir>/import-manifest.jsonl
//! <data_dir>/journal.log          orchestrator journal
//! <data_dir>/overlays/            overlay pyramids
//! <data_dir>/work/<job_id>/       app working directories and logs
//! ```

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use pathharbor_core::model::SlideInfo;
use pathharbor_core::Id;
use tokio::sync::oneshot;

use crate::clock::{Clock, SystemClock};
use crate::config::Config;
use crate::error::ApiError;
use crate::journal::Recovery;
use crate::orchestrator::{Endpoints, Job, Orchestrator, Settings};
use crate::overlays::OverlayService;
use crate::slides::SlideRegistry;

pub struct Platform {
    pub config: Config,
    pub slides: Arc<SlideRegistry>,
    pub orchestrator: Orchestrator,
    pub overlays: Arc<OverlayService>,
    /// What journal replay found on open.
    pub recovery: Recovery,
}

impl Platform {
    pub fn open(config: Config) -> Result<Arc<Self>, ApiError> {
        Self::open_with_clock(config, Arc::new(SystemClock))
    }

    pub fn open_with_clock(config: Config, clock: Arc<dyn Clock>) -> Result<Arc<Self>, ApiError> {
        let dir = &config.data_dir;
        std::fs::create_dir_all(dir)?;
        let slides = Arc::new(SlideRegistry::open(dir)?);
        let settings = Settings {
            workers: config.workers,
            default_timeout: Duration::from_secs(config.default_timeout_s),
            token_ttl: Duration::from_secs(config.token_ttl_s),
            work_dir: Some(dir.join("work")),
        };
        let (orchestrator, recovery) =
            Orchestrator::open(Some(&dir.join("journal.log")), config.fsync, slides.clone(), clock, settings)?;
        if recovery.truncated_bytes > 0 {
            tracing::warn!("journal: dropped {} trailing bytes after {} records", recovery.truncated_bytes, recovery.records);
        }
        let overlays = Arc::new(OverlayService::open(Some(&dir.join("overlays")), orchestrator.clone())?);
        Ok(Arc::new(Platform { config, slides, orchestrator, overlays, recovery }))
    }

    /// Imports and anonymizes a slide, then queues preprocessing for it.
    pub fn import_slide(&self, source: &Path, case_alias: &str) -> Result<(SlideInfo, Vec<(Job, bool)>), ApiError> {
        let info = self.slides.import_and_anonymize(source, case_alias)?;
        let jobs = self.orchestrator.enqueue_preprocessing(info.slide_id)?;
        Ok((info, jobs))
    }

    pub fn preprocess(&self, slide_id: Id) -> Result<Vec<(Job, bool)>, ApiError> {
        self.orchestrator.enqueue_preprocessing(slide_id)
    }

    /// Binds the configured address and serves on a background runtime.
    pub fn start(self: &Arc<Self>) -> std::io::Result<ServerHandle> {
        let addr = format!("{}:{}", self.config.host, self.config.port);
        let std_listener = std::net::TcpListener::bind(&addr)?;
        std_listener.set_nonblocking(true)?;
        let local = std_listener.local_addr()?;
        self.orchestrator.set_endpoints(Endpoints {
            app_api: format!("http://{local}/app/v1"),
            slide_api: format!("http://{local}/v1"),
        });
        let router = crate::http::router(self.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .thread_name("pathharbor-http")
            .build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                let _ = axum::serve(listener, router)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
            runtime.shutdown_timeout(Duration::from_secs(1));
        });
        Ok(ServerHandle { addr: local, stop: Some(tx), thread: Some(thread) })
    }
}

/// A running server; dropping it stops the server.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}
