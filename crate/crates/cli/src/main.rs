//! `quirqi <mode> --config <path> --out <dir> [--seed <n>]`
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 unstable or
//! unconvergeable model, 4 solver degeneracy, 5 I/O or other runtime
//! failure. Failures print `{code, message, context}` JSON on stderr.

mod config;
mod failure;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Mode, RunConfig};
use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "quirqi", version, about = "Lowest RPA excitation by dual-channel Rayleigh quotient iteration")]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    mode: Mode,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solver seed (overrides `solver.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::load(&cli.config, cli.mode, cli.out, cli.seed)?;
    let artifacts = run::execute(&cfg)?;
    artifacts.write_to(&cfg.output_dir)?;
    for name in artifacts.names() {
        println!("{}", cfg.output_dir.join(name).display());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            ExitCode::from(failure.exit_code)
        }
    }
}
