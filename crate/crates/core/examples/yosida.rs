//! Scalar tour of the regularized flux: resolvent, Yosida approximation,
//! Moreau envelope and derivative at a few points for several ε.
//!
//! ```bash
//! cargo run --example yosida
//! ```

use logdiff::nonlinearity::{self as nl, RegularizationParam};

fn main() {
    println!("{:>8} {:>8} {:>12} {:>12} {:>12} {:>12} {:>12}", "eps", "x", "J_eps(x)", "Psi_eps", "Psi(x)", "g_eps", "Psi_eps'");
    for eps in [1.0, 1e-1, 1e-2, 1e-3] {
        let e = RegularizationParam::new(eps).expect("positive epsilon");
        for x in [-5.0, -0.5, 0.0, 0.5, 5.0] {
            println!(
                "{:>8.0e} {:>8.2} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
                eps,
                x,
                nl::psi_resolvent(e, x),
                nl::psi_yosida(e, x),
                nl::psi(x),
                nl::g_moreau(e, x),
                nl::psi_yosida_derivative(e, x),
            );
        }
    }
    // As ε shrinks the Yosida flux climbs to Ψ from below and the envelope to g.
}
