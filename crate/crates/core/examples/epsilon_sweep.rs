//! Refines ε on one fixed noise path and prints the sup-in-time H⁻¹
//! distance between consecutive regularizations.
//!
//! ```bash
//! cargo run --release --example epsilon_sweep
//! ```

use std::sync::Arc;

use logdiff::grid::{self, GridSpec};
use logdiff::noise::{self, GammaRule, NoiseSpec};
use logdiff::solver::{self, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = GridSpec::new(1.0, 127)?;
    let eig = grid::eigensystem(&g, 8)?;
    let cfg = SolverConfig::new(1e-1, 1e-3, 0.5)?;
    let spec = NoiseSpec {
        k_max: 8,
        gamma_rule: GammaRule::PowerLaw { gamma0: 1.0, exponent: 8.0 },
        seed: 1,
        t_final: cfg.t_final,
        n_steps: cfg.n_steps(),
    };
    let w = Arc::new(noise::synthesize(&spec, &g, &eig)?);
    let x0 = g.sample(|x| 4.0 * x * (1.0 - x))?;
    let eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let sweep = solver::epsilon_sweep(&x0, &w, &cfg, &eps)?;
    for (pair, d) in eps.windows(2).zip(&sweep.consecutive) {
        println!("eps {:>6.0e} -> {:>6.0e}: sup_t |Y - Y'|_-1 = {d:.4e}", pair[0], pair[1]);
    }
    println!("strictly decreasing: {}", sweep.strictly_decreasing);
    sweep.write_curve_csv(std::io::stdout())?;
    Ok(())
}
