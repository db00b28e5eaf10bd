//! Checks the variational inequality on a computed trajectory with the
//! smoothed test process Z = (1 - μΔ)⁻¹Y, then with Z = Y, then with a
//! deliberately wrong initial datum to show the check can fail.
//!
//! ```bash
//! cargo run --release --example vi_check
//! ```

use std::sync::Arc;

use logdiff::grid::{self, GridSpec};
use logdiff::noise::{self, GammaRule, NoiseSpec};
use logdiff::solver::{self, SolverConfig};
use logdiff::verifier::{self, TestProcess};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = GridSpec::new(1.0, 127)?;
    let eig = grid::eigensystem(&g, 8)?;
    let (eps, dt) = (1e-3, 1e-3);
    let cfg = SolverConfig::new(eps, dt, 0.5)?;
    let spec = NoiseSpec {
        k_max: 8,
        gamma_rule: GammaRule::PowerLaw { gamma0: 1.0, exponent: 8.0 },
        seed: 7,
        t_final: cfg.t_final,
        n_steps: cfg.n_steps(),
    };
    let w = Arc::new(noise::synthesize(&spec, &g, &eig)?);
    let x0 = g.sample(|x| 4.0 * x * (1.0 - x))?;
    let tr = solver::solve_path(&x0, &w, &cfg)?;
    let tol = dt + eps;

    let z = verifier::build_test_process(&tr, 1e-2)?;
    println!("admissibility of Z = J_mu Y: {:?}", z.admissibility());
    print!("{}", verifier::vi_residual(&tr, &z, &x0, tol)?.summary());

    let own = TestProcess::state_of(&tr)?;
    print!("{}", verifier::vi_residual(&tr, &own, &x0, 0.0)?.summary());

    let wrong = z.z_fields()[0].clone();
    let report = verifier::vi_residual(&tr, &z, &wrong, 0.0)?;
    println!("wrong datum: max residual {:.3e}, passed = {}", report.scalar("max_residual").unwrap_or(f64::NAN), report.passed());
    Ok(())
}
