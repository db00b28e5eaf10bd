//! Drives the batch runner from a TOML file, the same path the `logdiff`
//! binary takes.
//!
//! ```bash
//! cargo run --release --example config_run -- configs/default.toml out/example
//! ```

use std::path::PathBuf;

use logdiff::experiment::{self, ExperimentConfig, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig::default(),
    };
    let opts = RunOptions {
        out_dir: Some(args.next().map(PathBuf::from).unwrap_or_else(|| "out/example".into())),
        paths: Some(cfg.noise.n_paths.min(40)),
        dump_trajectories: false,
    };
    for run in [experiment::cmd_noise_check, experiment::cmd_sweep_eps, experiment::cmd_verify] {
        let outcome = run(&cfg, &opts)?;
        print!("{}", outcome.summary);
        for f in &outcome.files {
            println!("  wrote {}", f.display());
        }
    }
    Ok(())
}
