// SPDX-License-Identifier: Apache-2.0

//! Platform CLI: slide tools, the server, app registration and validation
//! campaigns. Commands taking `--data-dir` open the store directly and must
//! not run while a server uses the same directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use pathharbor::compliance::Bundle;
use pathharbor::config::Config;
use pathharbor::validation::{synthetic_campaign, validate, CampaignSpec, RunOptions, DEFAULT_OUTPUT_KEY};
use pathharbor::{random_id, Platform};
use pathharbor_core::model::SlideInfo;
use pathharbor_core::slide::synth::{self, SyntheticSpec};
use pathharbor_core::slide::{build_pyramid, open_container, write_container, SlideReader};
use pathharbor_core::validation::ValidationManifest;

#[derive(Parser)]
#[command(name = "pathharbor", version, about = "Slide service, app orchestration and validation campaigns")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Slide container tools.
    #[command(subcommand)]
    Slide(SlideCmd),
    /// Run the HTTP server until interrupted.
    Server {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        store: Store,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// App registry.
    #[command(subcommand)]
    App(AppCmd),
    /// Generate a synthetic validation dataset into a data directory.
    Campaign {
        #[command(flatten)]
        store: Store,
        #[arg(long, default_value_t = 4)]
        seed: u64,
        #[arg(long, default_value_t = 22)]
        cases: u32,
        #[arg(long, value_delimiter = ',', default_value = "scanner-a,scanner-b")]
        scanners: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a registered app over a manifest and write the report.
    Validate {
        #[command(flatten)]
        store: Store,
        /// App namespace.
        #[arg(long)]
        app: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        html: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        parallel: usize,
        #[arg(long, default_value = DEFAULT_OUTPUT_KEY)]
        output_key: String,
    },
}

#[derive(Args)]
struct Store {
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SlideCmd {
    /// Write a synthetic slide container and its ground truth.
    Generate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1024)]
        width: u32,
        #[arg(long, default_value_t = 768)]
        height: u32,
        #[arg(long, default_value_t = 30)]
        positive: u32,
        #[arg(long, default_value_t = 70)]
        negative: u32,
        #[arg(long, default_value = "scanner-a")]
        scanner: String,
        #[arg(long, default_value_t = 256)]
        tile_size: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Print a container's slide info.
    Inspect { path: PathBuf },
    /// Import a container or PPM/PNG image under a fresh id; runs
    /// preprocessing apps for it.
    Import {
        #[command(flatten)]
        store: Store,
        path: PathBuf,
        #[arg(long)]
        alias: String,
    },
    /// List registered slides.
    List {
        #[command(flatten)]
        store: Store,
    },
}

#[derive(Subcommand)]
enum AppCmd {
    /// Register a bundle directory (ead.json + run.toml).
    Register {
        #[command(flatten)]
        store: Store,
        #[arg(long)]
        bundle: PathBuf,
    },
    List {
        #[command(flatten)]
        store: Store,
    },
}

type Fallible = Result<(), String>;

fn config_for(path: Option<&Path>, store: &Store) -> Result<Config, String> {
    let mut config = match path {
        Some(p) => Config::load(p).map_err(|e| e.to_string())?,
        None => Config { port: 0, ..Config::default() },
    };
    if let Some(d) = &store.data_dir {
        config.data_dir = d.clone();
    }
    Ok(config)
}

fn open(config: Config) -> Result<Arc<Platform>, String> {
    Platform::open(config).map_err(|e| e.to_string())
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn slide(cmd: SlideCmd) -> Fallible {
    match cmd {
        SlideCmd::Generate { seed, width, height, positive, negative, scanner, tile_size, out, truth } => {
            let spec = SyntheticSpec { tile_size, ..SyntheticSpec::new(width, height, positive, negative).with_scanner(&scanner) };
            let id = random_id();
            let s = synth::generate(seed, &spec, id).map_err(|e| e.to_string())?;
            let info = SlideInfo::new(id, u64::from(width), u64::from(height), tile_size, spec.pixel_size_nm);
            info.validate().map_err(|e| e.to_string())?;
            let levels = build_pyramid(s.base, tile_size).map_err(|e| e.to_string())?;
            write_container(&out, &info, &levels).map_err(|e| e.to_string())?;
            if let Some(t) = truth {
                let json = serde_json::to_vec_pretty(&s.ground_truth).map_err(|e| e.to_string())?;
                std::fs::write(&t, json).map_err(|e| format!("{}: {e}", t.display()))?;
            }
            print_json(&info);
        }
        SlideCmd::Inspect { path } => {
            let h = open_container(&path).map_err(|e| e.to_string())?;
            print_json(h.info());
        }
        SlideCmd::Import { store, path, alias } => {
            let platform = open(config_for(None, &store)?)?;
            let _server = platform.start().map_err(|e| e.to_string())?;
            let (info, jobs) = platform.import_slide(&path, &alias).map_err(|e| e.to_string())?;
            for (job, _) in &jobs {
                let done = platform.orchestrator.wait_terminal(job.job_id, Duration::from_secs(3600));
                if let Some(j) = done {
                    eprintln!("preprocessing job {} {:?}", j.job_id, j.status);
                }
            }
            print_json(&info);
        }
        SlideCmd::List { store } => {
            let platform = open(config_for(None, &store)?)?;
            print_json(&platform.slides.list());
        }
    }
    Ok(())
}

fn app(cmd: AppCmd) -> Fallible {
    match cmd {
        AppCmd::Register { store, bundle } => {
            let b = Bundle::load(&bundle).map_err(|e| e.to_string())?;
            let platform = open(config_for(None, &store)?)?;
            let rec = platform.orchestrator.register_app(&b.ead_text, b.executor).map_err(|e| e.to_string())?;
            println!("{} {}", rec.app_id, rec.namespace);
        }
        AppCmd::List { store } => {
            let platform = open(config_for(None, &store)?)?;
            for a in platform.orchestrator.apps() {
                println!("{} {}", a.app_id, a.namespace);
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Fallible {
    match cli.cmd {
        Cmd::Slide(c) => slide(c),
        Cmd::App(c) => app(c),
        Cmd::Server { config, store, port, workers } => {
            let from_file = config.is_some();
            let mut config = config_for(config.as_deref(), &store)?;
            match port {
                Some(p) => config.port = p,
                None if !from_file => config.port = Config::default().port,
                None => {}
            }
            if let Some(w) = workers {
                config.workers = w;
            }
            let platform = open(config)?;
            let server = platform.start().map_err(|e| e.to_string())?;
            if platform.recovery.truncated_bytes > 0 {
                eprintln!("journal: dropped {} trailing bytes", platform.recovery.truncated_bytes);
            }
            println!("listening on {}", server.base_url());
            let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(|e| e.to_string())?;
            rt.block_on(async {
                let _ = tokio::signal::ctrl_c().await;
            });
            server.stop();
            Ok(())
        }
        Cmd::Campaign { store, seed, cases, scanners, out } => {
            let platform = open(config_for(None, &store)?)?;
            let spec = CampaignSpec { seed, cases, scanners, ..CampaignSpec::default() };
            let manifest = synthetic_campaign(&platform.slides, &spec).map_err(|e| e.to_string())?;
            let json = serde_json::to_vec_pretty(&manifest).map_err(|e| e.to_string())?;
            std::fs::write(&out, json).map_err(|e| format!("{}: {e}", out.display()))?;
            println!("{} entries -> {}", manifest.entries.len(), out.display());
            Ok(())
        }
        Cmd::Validate { store, app, manifest, out, html, parallel, output_key } => {
            let mut config = config_for(None, &store)?;
            config.workers = config.workers.max(parallel);
            let platform = open(config)?;
            let _server = platform.start().map_err(|e| e.to_string())?;
            let record = platform.orchestrator.app_by_namespace(&app).ok_or_else(|| format!("UNKNOWN_APP: {app}"))?;
            let text = std::fs::read_to_string(&manifest).map_err(|e| format!("{}: {e}", manifest.display()))?;
            let m = ValidationManifest::parse(&text, |id| platform.slides.contains(*id))
                .map_err(|e| format!("{}: {e}", e.code()))?;
            let opts = RunOptions { output_key, parallel, ..RunOptions::default() };
            let report = validate(&platform.orchestrator, &record, &m, &opts).map_err(|e| e.to_string())?;
            let json = serde_json::to_vec_pretty(&report).map_err(|e| e.to_string())?;
            std::fs::write(&out, json).map_err(|e| format!("{}: {e}", out.display()))?;
            if let Some(h) = html {
                std::fs::write(&h, report.render_html()).map_err(|e| format!("{}: {e}", h.display()))?;
            }
            print!("{}", report.render_table());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(tracing::Level::WARN).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
