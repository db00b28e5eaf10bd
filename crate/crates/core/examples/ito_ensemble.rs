//! Monte Carlo check of the mean-square bound on an ensemble of 200 paths.
//!
//! ```bash
//! cargo run --release --example ito_ensemble
//! ```

use std::sync::Arc;

use logdiff::grid::{self, GridSpec};
use logdiff::noise::{self, GammaRule, NoiseSpec};
use logdiff::solver::{self, SolverConfig, Trajectory};
use logdiff::verifier;
use rayon::prelude::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = GridSpec::new(1.0, 127)?;
    let eig = grid::eigensystem(&g, 8)?;
    let cfg = SolverConfig::new(1e-2, 1e-3, 0.5)?;
    let spec_for = |seed| NoiseSpec {
        k_max: 8,
        gamma_rule: GammaRule::PowerLaw { gamma0: 1.0, exponent: 8.0 },
        seed,
        t_final: cfg.t_final,
        n_steps: cfg.n_steps(),
    };
    let x0 = g.sample(|x| 4.0 * x * (1.0 - x))?;
    let ensemble: Vec<Trajectory> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let w = Arc::new(noise::synthesize(&spec_for(seed), &g, &eig)?);
            Ok(solver::solve_path(&x0, &w, &cfg)?)
        })
        .collect::<Result<_, Box<dyn std::error::Error + Send + Sync>>>()
        .map_err(|e| e.to_string())?;
    let report = verifier::ito_l2_bound(&ensemble, &spec_for(0), &eig)?;
    print!("{}", report.summary());
    for row in report.rows.iter().step_by(100) {
        println!("t = {:.2}: mean |X|² = {:.5}, bound = {:.5}", row.t, row.lhs, row.rhs);
    }
    Ok(())
}
