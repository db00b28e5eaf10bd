use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use logdiff::experiment::{self, ExperimentConfig, Outcome, RunOptions};

#[derive(Parser)]
#[command(name = "logdiff", version = experiment::VERSION_STRING, about = "Stochastic logarithmic diffusion: simulate and verify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an ensemble of paths and write per-path summaries.
    Simulate(Common),
    /// Refine ε on one noise path and report sup-H^-1 distances.
    SweepEps(Common),
    /// Run the configured verifier checks.
    Verify(Common),
    /// Check noise summability, sup-norms and the continuity partition.
    NoiseCheck(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of noise paths (overrides `[noise] n_paths`).
    #[arg(long)]
    paths: Option<usize>,
    /// Also write full trajectories as CSV.
    #[arg(long)]
    dump_trajectories: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&ExperimentConfig, &RunOptions) -> _) = match &cli.command {
        Command::Simulate(c) => (c, experiment::cmd_simulate),
        Command::SweepEps(c) => (c, experiment::cmd_sweep_eps),
        Command::Verify(c) => (c, experiment::cmd_verify),
        Command::NoiseCheck(c) => (c, experiment::cmd_noise_check),
    };
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    };
    let opts = RunOptions {
        out_dir: common.out.clone(),
        paths: common.paths,
        dump_trajectories: common.dump_trajectories,
    };
    let result = cfg.and_then(|cfg| run(&cfg, &opts));
    match result {
        Ok(Outcome { passed, summary, .. }) => {
            print!("{summary}");
            ExitCode::from(if passed { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
