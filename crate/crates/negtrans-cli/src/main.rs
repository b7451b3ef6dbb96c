//! Scenario runner: harvest sweeps, teleportation comparisons and no-go
//! verification suites, reproducible from config files.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical
//! non-convergence, 4 invariant violation, 1 other I/O failure.

mod config;
mod runner;

use std::path::PathBuf;

use clap::Parser;

use config::RunConfig;
use runner::{RunError, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "negtrans", version, about = "Entanglement transfer scenario runner")]
struct Cli {
    /// Configuration file (TOML; .json files are parsed as JSON).
    #[arg(long)]
    config: PathBuf,

    /// Output directory for results.csv / results.jsonl / run_meta.json.
    /// Defaults to $NEGTRANS_OUT_DIR, then "out".
    #[arg(long)]
    out: Option<PathBuf>,

    /// Random seed for the property suites; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads for sweep evaluation. Defaults to $NEGTRANS_THREADS,
    /// then all cores.
    #[arg(long)]
    threads: Option<usize>,

    /// Print progress to stderr.
    #[arg(long)]
    verbose: bool,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    });
}

fn execute(cli: Cli) -> Result<(), RunError> {
    let config = RunConfig::load(&cli.config)?;
    let out_dir = cli
        .out
        .or_else(|| std::env::var_os("NEGTRANS_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let threads = cli.threads.or_else(|| {
        std::env::var("NEGTRANS_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let options = RunOptions {
        out_dir,
        seed: cli.seed.unwrap_or(config.seed),
        threads,
        verbose: cli.verbose,
    };
    if cli.verbose {
        eprintln!(
            "running scenario {:?} with seed {} into {}",
            config.scenario,
            options.seed,
            options.out_dir.display()
        );
    }
    runner::run(&config, &options)
}
