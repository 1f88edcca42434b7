//! Operator surface: experiment configs in, reports and CSVs out.
//!
//! Exit codes: 0 for pass (or inconclusive, which is flagged in the
//! report), 1 for an identity/validation failure, 2 for configuration or
//! runtime errors.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{dispatch, out_dir_or_default, Invocation};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "shiftfield",
    about = "Sample shift-randomized representors of max-stable fields and verify their identities",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory for reports and CSVs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override mc.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override mc.workers.
    #[arg(long)]
    workers: Option<usize>,
    /// Override mc.n.
    #[arg(long)]
    n: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw max-stable paths through the Poisson series and export CSV.
    SimulateMaxstable(CommonArgs),
    /// Estimate an exponent functional (finite-dimensional law).
    Exponent(CommonArgs),
    /// Draw shift-randomized paths and validate the construction.
    Transform(CommonArgs),
    /// Verify one functional identity with a Welch-test verdict.
    Verify(CommonArgs),
    /// Uniform-sampling integral estimator.
    Integrate(CommonArgs),
    /// Validate a representor's normalization and positivity.
    Validate(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SimulateMaxstable(_) => "simulate-maxstable",
            Command::Exponent(_) => "exponent",
            Command::Transform(_) => "transform",
            Command::Verify(_) => "verify",
            Command::Integrate(_) => "integrate",
            Command::Validate(_) => "validate",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::SimulateMaxstable(a)
            | Command::Exponent(a)
            | Command::Transform(a)
            | Command::Verify(a)
            | Command::Integrate(a)
            | Command::Validate(a) => a,
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let args = cli.command.args();
    let mut config = ExperimentConfig::from_path(&args.config)?;

    let mut overrides = serde_json::Map::new();
    if let Some(seed) = args.seed {
        config.mc.master_seed = seed;
        overrides.insert("seed".into(), json!(seed));
    }
    if let Some(workers) = args.workers {
        config.mc.workers = workers;
        overrides.insert("workers".into(), json!(workers));
    }
    if let Some(n) = args.n {
        config.mc.n = n;
        overrides.insert("n".into(), json!(n));
    }

    let invocation = Invocation {
        config,
        out_dir: out_dir_or_default(args.out_dir.clone()),
        overrides: serde_json::Value::Object(overrides),
    };
    dispatch(cli.command.name(), &invocation)
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            2
        }
    };
    std::process::exit(code);
}
