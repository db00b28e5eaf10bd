//! Pathwise simulation and verification of stochastic logarithmic diffusion
//!
//! ```text
//! dX - Δ(sign(X) ln(|X|+1)) dt = √Q dW   on (0,T) × (0,L),  Dirichlet boundary
//! ```
//!
//! The flux is regularized by its Yosida approximation plus a small linear
//! term, the noise is shifted out (`Y = X - √Q W`), and the resulting random
//! PDE is integrated per noise realization with implicit Euler and Newton.
//! The [`verifier`] module then checks the a-priori bounds and the
//! variational-inequality solution concept on the computed trajectories.
//!
//! Modules, bottom up:
//! - [`grid`]: uniform Dirichlet grid, Laplacian, inverse, resolvent, norms.
//! - [`nonlinearity`]: `Ψ`, `g`, resolvent, Yosida approximation, envelopes.
//! - [`noise`]: seeded Q-Wiener synthesis and summability checks.
//! - [`solver`]: implicit and explicit steppers, path solver, ε-sweeps.
//! - [`verifier`]: estimates, test processes, inequality residuals.
//! - [`experiment`]: config-driven batch runs writing CSV artifacts.

pub mod experiment;
pub mod grid;
pub mod noise;
pub mod nonlinearity;
pub mod solver;
pub mod verifier;

pub use grid::{EigenSystem, Field, GridSpec};
pub use noise::{GammaRule, NoisePath, NoiseSpec};
pub use nonlinearity::RegularizationParam;
pub use solver::{Scheme, SolverConfig, Trajectory};
pub use verifier::{Report, TestProcess};
