// SPDX-License-Identifier: Apache-2.0

//! App test suite CLI. `run` exits 0 iff every check passes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pathharbor::compliance::{run_compliance, Bundle, Verdict};
use pathharbor::fixtures::package_fixture;

#[derive(Parser)]
#[command(name = "pathharbor-ats", about = "Compliance checks for app bundles")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every check against a bundle directory (ead.json + run.toml).
    Run {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Write the JSON report here as well.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a bundle for one of the built-in fixture apps.
    Package {
        #[arg(long)]
        fixture: String,
        /// Path of the pathharbor-fixture executable.
        #[arg(long)]
        exe: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run { bundle, seed, report } => {
            let result = Bundle::load(&bundle).and_then(|b| run_compliance(&b, seed));
            let r = match result {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            println!("namespace: {}", r.namespace.as_deref().unwrap_or("-"));
            for c in &r.checks {
                let v = match c.verdict {
                    Verdict::Pass => "PASS",
                    Verdict::Fail => "FAIL",
                    Verdict::Skip => "SKIP",
                };
                println!("{v:<5} {:<20} {}", c.check_id, c.detail);
            }
            let json = serde_json::to_string_pretty(&r).expect("report serializes");
            if let Some(path) = report {
                if let Err(e) = std::fs::write(&path, json + "\n") {
                    eprintln!("cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            if r.passed() {
                println!("overall: pass");
                ExitCode::SUCCESS
            } else {
                println!("overall: fail ({})", r.failed_checks().join(", "));
                ExitCode::FAILURE
            }
        }
        Cmd::Package { fixture, exe, out } => match package_fixture(&fixture, &exe, &out) {
            Ok(dir) => {
                println!("{}", dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
    }
}
