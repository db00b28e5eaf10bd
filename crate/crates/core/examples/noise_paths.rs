//! Synthesizes Q-Wiener paths, checks the summability margins, and prints
//! the sup-norm estimate and a continuity partition.
//!
//! ```bash
//! cargo run --example noise_paths -- 42
//! ```

use logdiff::grid::{self, GridSpec};
use logdiff::noise::{self, GammaRule, NoiseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(42);
    let g = GridSpec::new(1.0, 127)?;
    let eig = grid::eigensystem(&g, 8)?;

    for r in [8.0, 4.0] {
        let spec = NoiseSpec {
            k_max: 8,
            gamma_rule: GammaRule::PowerLaw { gamma0: 1.0, exponent: r },
            seed,
            t_final: 1.0,
            n_steps: 1000,
        };
        let h1 = noise::validate_h1(&spec, &eig)?;
        println!(
            "r = {r}: Σγ²λ² = {:.4e}, Σγλ³ = {:.4e}, margins {:?}/{:?}, passed = {}",
            h1.sum_quadratic, h1.sum_cubic, h1.margin_quadratic, h1.margin_cubic, h1.passed
        );
        match noise::synthesize(&spec, &g, &eig) {
            Ok(path) => {
                println!("  sup_t |√QW|_∞ = {:.6}", noise::sup_norm_estimate(&path));
                let cells = noise::modulus_of_continuity(&path, 0.5)?;
                println!("  α = 0.5 partition: {} cells at steps {:?}", cells.len() - 1, cells);
            }
            Err(e) => println!("  refused: {e}"),
        }
    }
    Ok(())
}
