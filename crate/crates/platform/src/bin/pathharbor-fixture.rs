// SPDX-License-Identifier: Apache-2.0

//! Fixture apps for the test suite and validation runs.

use std::time::Duration;

use clap::Parser;

#[derive(Parser)]
#[command(name = "pathharbor-fixture", about = "Run a fixture app under the launch contract")]
struct Args {
    /// noop, tps-counter or one of the broken-* mutants
    name: String,
    /// Added to every computed TPS.
    #[arg(long, default_value_t = 0.0)]
    bias: f64,
    /// Class namespace to emit (defaults to the fixture's own).
    #[arg(long)]
    namespace: Option<String>,
    /// Sleep before doing anything.
    #[arg(long, default_value_t = 0)]
    delay_ms: u64,
}

fn main() {
    let args = Args::parse();
    if args.delay_ms > 0 {
        std::thread::sleep(Duration::from_millis(args.delay_ms));
    }
    std::process::exit(pathharbor::fixtures::run_fixture(&args.name, args.bias, args.namespace.as_deref()));
}
