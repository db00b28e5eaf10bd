//! One pathwise solve on the default desk-scale problem, printing norms and
//! Newton effort every 50 steps.
//!
//! ```bash
//! cargo run --release --example simulate
//! ```

use std::sync::Arc;

use logdiff::grid::{self, GridSpec};
use logdiff::noise::{self, GammaRule, NoiseSpec};
use logdiff::solver::{self, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = GridSpec::new(1.0, 127)?;
    let eig = grid::eigensystem(&g, 8)?;
    let cfg = SolverConfig::new(1e-2, 1e-3, 0.5)?;
    let spec = NoiseSpec {
        k_max: 8,
        gamma_rule: GammaRule::PowerLaw { gamma0: 1.0, exponent: 8.0 },
        seed: 42,
        t_final: cfg.t_final,
        n_steps: cfg.n_steps(),
    };
    let w = Arc::new(noise::synthesize(&spec, &g, &eig)?);
    let x0 = g.sample(|x| 4.0 * x * (1.0 - x))?;
    let tr = solver::solve_path(&x0, &w, &cfg)?;

    println!("{:>6} {:>8} {:>12} {:>12} {:>8}", "step", "t", "|X|_2", "|X|_-1", "newton");
    for n in (0..=tr.n_steps()).step_by(50) {
        let x = &tr.x_fields()[n];
        let iters = if n == 0 { 0 } else { tr.diagnostics()[n - 1].newton_iters };
        println!(
            "{:>6} {:>8.3} {:>12.6} {:>12.6} {:>8}",
            n,
            tr.times()[n],
            grid::norm_l2(x),
            grid::norm_hminus1(x)?,
            iters
        );
    }
    let total: usize = tr.diagnostics().iter().map(|d| d.newton_iters).sum();
    println!("total Newton iterations: {total}");
    Ok(())
}
