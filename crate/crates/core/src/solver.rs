//! Pathwise integration of the regularized equation.
//!
//! With `Y = X - √Q W` the stochastic equation becomes, for each fixed noise
//! realization, the random PDE `dY/dt = Δ Ψ̄_ε(Y + √Q W)`. It is advanced with
//! implicit Euler; each step is a Newton solve whose Jacobian
//! `I - Δt Δ_h diag(Ψ̄_ε'(Y + w))` is tridiagonal. A forward Euler stepper is
//! kept as an independent cross-check.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, Field, GridError, GridSpec};
use crate::noise::NoisePath;
use crate::nonlinearity::{psi_bar, psi_bar_derivative, psi_bar_with_derivative, RegularizationParam};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("Newton did not converge: residual {residual:e} after {iterations} iterations")]
    NewtonFailed { residual: f64, iterations: usize },
    #[error("explicit step unstable: dt·(4/h²)·max Ψ̄' = {bound} > 1")]
    ExplicitUnstable { bound: f64 },
    #[error("step {step} failed after {retries} dt-halvings: {source}")]
    StepFailed {
        step: usize,
        retries: usize,
        #[source]
        source: Box<SolverError>,
    },
    #[error("noise path does not match the solver time grid: {0}")]
    NoiseMismatch(String),
    #[error("epsilon list must have at least two entries and be non-increasing")]
    BadEpsilonList,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("csv output failed: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub epsilon: RegularizationParam,
    pub dt: f64,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub scheme: Scheme,
    /// How many times a failing step may be split in half before giving up.
    pub max_retries: usize,
}

impl SolverConfig {
    pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
    pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
    pub const DEFAULT_MAX_RETRIES: usize = 3;

    /// Implicit scheme with default Newton settings.
    pub fn new(epsilon: f64, dt: f64, t_final: f64) -> Result<Self, SolverError> {
        let cfg = Self {
            epsilon: RegularizationParam::new(epsilon).map_err(|e| SolverError::Config(e.to_string()))?,
            dt,
            t_final,
            newton_tol: Self::DEFAULT_NEWTON_TOL,
            newton_max_iter: Self::DEFAULT_NEWTON_MAX_ITER,
            scheme: Scheme::Implicit,
            max_retries: Self::DEFAULT_MAX_RETRIES,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_epsilon(mut self, epsilon: RegularizationParam) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SolverError::Config(format!("dt = {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(SolverError::Config(format!("t_final = {}", self.t_final)));
        }
        let steps = (self.t_final / self.dt).round();
        if steps < 1.0 || (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(SolverError::Config(format!(
                "dt = {} does not divide t_final = {}",
                self.dt, self.t_final
            )));
        }
        if !(self.newton_tol > 0.0) {
            return Err(SolverError::Config(format!("newton_tol = {}", self.newton_tol)));
        }
        if self.newton_max_iter == 0 {
            return Err(SolverError::Config("newton_max_iter = 0".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Result of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub y: Field,
    pub newton_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub newton_iters: usize,
    pub residual: f64,
    /// 1 unless the step had to be subdivided.
    pub substeps: usize,
}

/// `F(Y) = Y - Δt Δ_h Ψ̄_ε(Y + w) - y_prev`, together with `Ψ̄_ε'(Y + w)`.
fn implicit_residual(
    eps: RegularizationParam,
    dt: f64,
    h: f64,
    y: &[f64],
    w: &[f64],
    y_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (flux, slope): (Vec<f64>, Vec<f64>) = y.iter().zip(w).map(|(a, b)| psi_bar_with_derivative(eps, a + b)).unzip();
    let lap = grid::laplacian_raw(h, &flux);
    let f = y
        .iter()
        .zip(&lap)
        .zip(y_prev)
        .map(|((yj, lj), pj)| yj - dt * lj - pj)
        .collect();
    (f, slope)
}

fn l2(h: f64, v: &[f64]) -> f64 {
    (h * grid::dot(v, v)).sqrt()
}

const MAX_DAMPING_HALVINGS: usize = 30;

fn newton_implicit(
    y_prev: &[f64],
    w: &[f64],
    eps: RegularizationParam,
    dt: f64,
    h: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64), SolverError> {
    let n = y_prev.len();
    let r = dt / (h * h);
    let mut y = y_prev.to_vec();
    let (mut f, mut d) = implicit_residual(eps, dt, h, &y, w, y_prev);
    let mut norm = l2(h, &f);
    for iter in 0..max_iter {
        if norm <= tol {
            return Ok((y, iter, norm));
        }
        let lower: Vec<f64> = (0..n).map(|j| if j > 0 { -r * d[j - 1] } else { 0.0 }).collect();
        let upper: Vec<f64> = (0..n).map(|j| if j + 1 < n { -r * d[j + 1] } else { 0.0 }).collect();
        let diag: Vec<f64> = d.iter().map(|dj| 1.0 + 2.0 * r * dj).collect();
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = grid::solve_tridiagonal(&lower, &diag, &upper, &rhs);

        let mut lambda = 1.0;
        let mut halvings = 0;
        loop {
            let trial: Vec<f64> = y.iter().zip(&delta).map(|(a, b)| a + lambda * b).collect();
            let (f_trial, d_trial) = implicit_residual(eps, dt, h, &trial, w, y_prev);
            let n_trial = l2(h, &f_trial);
            if n_trial < norm || halvings >= MAX_DAMPING_HALVINGS {
                y = trial;
                f = f_trial;
                d = d_trial;
                norm = n_trial;
                break;
            }
            lambda *= 0.5;
            halvings += 1;
        }
        if !norm.is_finite() {
            return Err(SolverError::NewtonFailed {
                residual: norm,
                iterations: iter + 1,
            });
        }
    }
    if norm <= tol {
        Ok((y, max_iter, norm))
    } else {
        Err(SolverError::NewtonFailed {
            residual: norm,
            iterations: max_iter,
        })
    }
}

/// One implicit Euler step: solves `Y - Δt Δ_h Ψ̄_ε(Y + w_next) = y_prev`.
pub fn step_implicit(y_prev: &Field, w_next: &Field, cfg: &SolverConfig) -> Result<StepOutcome, SolverError> {
    step_implicit_dt(y_prev, w_next, cfg, cfg.dt)
}

fn step_implicit_dt(y_prev: &Field, w_next: &Field, cfg: &SolverConfig, dt: f64) -> Result<StepOutcome, SolverError> {
    if y_prev.grid() != w_next.grid() {
        return Err(GridError::GridMismatch.into());
    }
    let h = y_prev.grid().h();
    let (y, newton_iters, residual) = newton_implicit(
        y_prev.values(),
        w_next.values(),
        cfg.epsilon,
        dt,
        h,
        cfg.newton_tol,
        cfg.newton_max_iter,
    )?;
    Ok(StepOutcome {
        y: Field::new(*y_prev.grid(), y)?,
        newton_iters,
        residual,
    })
}

/// Stability number `Δt (4/h²) max_j Ψ̄_ε'(y_j + w_j)` of the forward step.
pub fn explicit_stability_bound(y: &Field, w: &Field, cfg: &SolverConfig) -> f64 {
    let h = y.grid().h();
    let max_d = y
        .values()
        .iter()
        .zip(w.values())
        .map(|(a, b)| psi_bar_derivative(cfg.epsilon, a + b))
        .fold(0.0, f64::max);
    cfg.dt * 4.0 / (h * h) * max_d
}

/// Forward Euler step `Y = y_prev + Δt Δ_h Ψ̄_ε(y_prev + w_prev)`.
pub fn step_explicit(y_prev: &Field, w_prev: &Field, cfg: &SolverConfig) -> Result<Field, SolverError> {
    if y_prev.grid() != w_prev.grid() {
        return Err(GridError::GridMismatch.into());
    }
    let bound = explicit_stability_bound(y_prev, w_prev, cfg);
    if bound > 1.0 {
        return Err(SolverError::ExplicitUnstable { bound });
    }
    let flux = y_prev.zip_with(w_prev, |a, b| psi_bar(cfg.epsilon, a + b))?;
    Ok(y_prev.axpy(cfg.dt, &grid::laplacian_apply(&flux)?)?)
}

/// Time-indexed `Y_ε` and `X_ε = Y_ε + √Q W` on one noise realization.
#[derive(Debug, Clone)]
pub struct Trajectory {
    config: SolverConfig,
    grid: GridSpec,
    noise: Arc<NoisePath>,
    times: Vec<f64>,
    y_fields: Vec<Field>,
    x_fields: Vec<Field>,
    diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    /// Wraps externally produced states `X(t_n)` (e.g. read from another
    /// implementation) so the verifier can be run on them. Diagnostics are zero.
    pub fn from_states(x_fields: Vec<Field>, noise: &Arc<NoisePath>, config: &SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        let first = x_fields
            .first()
            .ok_or_else(|| SolverError::NoiseMismatch("no states given".into()))?;
        check_noise(first, noise, config)?;
        if x_fields.len() != noise.n_steps() + 1 {
            return Err(SolverError::NoiseMismatch(format!(
                "{} states for {} noise times",
                x_fields.len(),
                noise.n_steps() + 1
            )));
        }
        let y_fields = x_fields
            .iter()
            .zip(noise.values())
            .map(|(x, w)| x.sub(w))
            .collect::<Result<Vec<_>, _>>()?;
        let n_steps = x_fields.len() - 1;
        Ok(Self {
            config: config.clone(),
            grid: *first.grid(),
            noise: Arc::clone(noise),
            times: (0..=n_steps).map(|n| n as f64 * config.dt).collect(),
            y_fields,
            x_fields,
            diagnostics: vec![
                StepDiagnostics {
                    newton_iters: 0,
                    residual: 0.0,
                    substeps: 1,
                };
                n_steps
            ],
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn noise(&self) -> &Arc<NoisePath> {
        &self.noise
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn y_fields(&self) -> &[Field] {
        &self.y_fields
    }

    pub fn x_fields(&self) -> &[Field] {
        &self.x_fields
    }

    /// One entry per step (`n_steps` entries).
    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn initial(&self) -> &Field {
        &self.y_fields[0]
    }

    pub fn final_x(&self) -> &Field {
        self.x_fields.last().expect("trajectory has at least the initial state")
    }

    /// Rows `step,time,node,Y,X`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SolverError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| SolverError::Io(e.to_string());
        w.write_record(["step", "time", "node", "Y", "X"]).map_err(io)?;
        for (n, (y, x)) in self.y_fields.iter().zip(&self.x_fields).enumerate() {
            let t = self.times[n].to_string();
            for (j, (yj, xj)) in y.values().iter().zip(x.values()).enumerate() {
                w.write_record([n.to_string(), t.clone(), (j + 1).to_string(), yj.to_string(), xj.to_string()])
                    .map_err(io)?;
            }
        }
        w.flush().map_err(|e| SolverError::Io(e.to_string()))
    }

    /// Rows `step,newton_iters,residual`.
    pub fn write_diagnostics_csv<W: Write>(&self, out: W) -> Result<(), SolverError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| SolverError::Io(e.to_string());
        w.write_record(["step", "newton_iters", "residual"]).map_err(io)?;
        for (n, d) in self.diagnostics.iter().enumerate() {
            w.write_record([(n + 1).to_string(), d.newton_iters.to_string(), d.residual.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| SolverError::Io(e.to_string()))
    }
}

fn check_noise(x0: &Field, noise: &NoisePath, cfg: &SolverConfig) -> Result<(), SolverError> {
    if noise.grid() != x0.grid() {
        return Err(SolverError::NoiseMismatch("spatial grids differ".into()));
    }
    if noise.n_steps() != cfg.n_steps() {
        return Err(SolverError::NoiseMismatch(format!(
            "noise has {} steps, solver needs {}",
            noise.n_steps(),
            cfg.n_steps()
        )));
    }
    if (noise.dt() - cfg.dt).abs() > 1e-9 * cfg.dt {
        return Err(SolverError::NoiseMismatch(format!(
            "noise dt {} vs solver dt {}",
            noise.dt(),
            cfg.dt
        )));
    }
    Ok(())
}

/// Implicit step with subdivision on Newton failure. Sub-steps see the forcing
/// interpolated linearly between the two grid times.
fn implicit_with_retries(
    y_prev: &Field,
    w_prev: &Field,
    w_next: &Field,
    cfg: &SolverConfig,
) -> Result<(Field, StepDiagnostics), SolverError> {
    let mut last_err = None;
    for level in 0..=cfg.max_retries {
        let parts = 1usize << level;
        let sub_dt = cfg.dt / parts as f64;
        let mut y = y_prev.clone();
        let mut iters = 0;
        let mut worst: f64 = 0.0;
        let mut failed = None;
        for p in 1..=parts {
            let theta = p as f64 / parts as f64;
            let w = if parts == 1 {
                w_next.clone()
            } else {
                w_prev.zip_with(w_next, |a, b| a + theta * (b - a))?
            };
            match step_implicit_dt(&y, &w, cfg, sub_dt) {
                Ok(out) => {
                    y = out.y;
                    iters += out.newton_iters;
                    worst = worst.max(out.residual);
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        match failed {
            None => {
                return Ok((
                    y,
                    StepDiagnostics {
                        newton_iters: iters,
                        residual: worst,
                        substeps: parts,
                    },
                ))
            }
            Some(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt was made"))
}

/// Marches the configured scheme over the whole noise path.
pub fn solve_path(x0: &Field, noise: &Arc<NoisePath>, cfg: &SolverConfig) -> Result<Trajectory, SolverError> {
    cfg.validate()?;
    check_noise(x0, noise, cfg)?;
    let n_steps = cfg.n_steps();
    let w = noise.values();
    let mut y_fields = Vec::with_capacity(n_steps + 1);
    let mut diagnostics = Vec::with_capacity(n_steps);
    y_fields.push(x0.clone());
    for n in 0..n_steps {
        let y_prev = &y_fields[n];
        let (y, diag) = match cfg.scheme {
            Scheme::Implicit => implicit_with_retries(y_prev, &w[n], &w[n + 1], cfg).map_err(|e| SolverError::StepFailed {
                step: n + 1,
                retries: cfg.max_retries,
                source: Box::new(e),
            })?,
            Scheme::Explicit => {
                let y = step_explicit(y_prev, &w[n], cfg).map_err(|e| SolverError::StepFailed {
                    step: n + 1,
                    retries: 0,
                    source: Box::new(e),
                })?;
                (
                    y,
                    StepDiagnostics {
                        newton_iters: 0,
                        residual: 0.0,
                        substeps: 1,
                    },
                )
            }
        };
        y_fields.push(y);
        diagnostics.push(diag);
    }
    let x_fields = y_fields
        .iter()
        .zip(w)
        .map(|(y, wn)| y.add(wn))
        .collect::<Result<Vec<_>, _>>()?;
    let times = (0..=n_steps).map(|n| n as f64 * cfg.dt).collect();
    Ok(Trajectory {
        config: cfg.clone(),
        grid: *x0.grid(),
        noise: Arc::clone(noise),
        times,
        y_fields,
        x_fields,
        diagnostics,
    })
}

/// `sup_n |a_n - b_n|₋₁` over two equally long field sequences.
pub fn sup_hminus1_distance(a: &[Field], b: &[Field]) -> Result<f64, GridError> {
    a.iter().zip(b).try_fold(0.0_f64, |m, (fa, fb)| {
        Ok(m.max(grid::norm_hminus1(&fa.sub(fb)?)?))
    })
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub epsilons: Vec<f64>,
    /// `distances[i][j] = sup_n |Y_{ε_i}(t_n) - Y_{ε_j}(t_n)|₋₁`
    pub distances: Vec<Vec<f64>>,
    /// `consecutive[i] = distances[i][i+1]`
    pub consecutive: Vec<f64>,
    pub strictly_decreasing: bool,
    pub trajectories: Vec<Trajectory>,
}

impl SweepReport {
    /// Rows `eps_i,eps_j,sup_hminus1_distance`.
    pub fn write_matrix_csv<W: Write>(&self, out: W) -> Result<(), SolverError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| SolverError::Io(e.to_string());
        w.write_record(["eps_i", "eps_j", "sup_hminus1_distance"]).map_err(io)?;
        for (i, row) in self.distances.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                w.write_record([self.epsilons[i].to_string(), self.epsilons[j].to_string(), d.to_string()])
                    .map_err(io)?;
            }
        }
        w.flush().map_err(|e| SolverError::Io(e.to_string()))
    }

    /// Rows `eps,eps_next,distance`.
    pub fn write_curve_csv<W: Write>(&self, out: W) -> Result<(), SolverError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| SolverError::Io(e.to_string());
        w.write_record(["eps", "eps_next", "distance"]).map_err(io)?;
        for (i, d) in self.consecutive.iter().enumerate() {
            w.write_record([self.epsilons[i].to_string(), self.epsilons[i + 1].to_string(), d.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| SolverError::Io(e.to_string()))
    }
}

/// Solves on the same noise path for each `ε` and tabulates sup-in-time
/// H⁻¹ distances between the `Y_ε`.
pub fn epsilon_sweep(
    x0: &Field,
    noise: &Arc<NoisePath>,
    cfg: &SolverConfig,
    eps_list: &[f64],
) -> Result<SweepReport, SolverError> {
    if eps_list.len() < 2 || eps_list.windows(2).any(|w| w[1] > w[0]) {
        return Err(SolverError::BadEpsilonList);
    }
    let params = eps_list
        .iter()
        .map(|&e| RegularizationParam::new(e).map_err(|err| SolverError::Config(err.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let trajectories = params
        .par_iter()
        .map(|&eps| solve_path(x0, noise, &cfg.clone().with_epsilon(eps)))
        .collect::<Result<Vec<_>, _>>()?;
    let m = trajectories.len();
    let mut distances = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let d = sup_hminus1_distance(trajectories[i].y_fields(), trajectories[j].y_fields())?;
            distances[i][j] = d;
            distances[j][i] = d;
        }
    }
    let consecutive: Vec<f64> = (0..m - 1).map(|i| distances[i][i + 1]).collect();
    let strictly_decreasing = consecutive.windows(2).all(|w| w[1] < w[0]);
    Ok(SweepReport {
        epsilons: eps_list.to_vec(),
        distances,
        consecutive,
        strictly_decreasing,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{self, GammaRule, NoiseSpec};

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(1.0, n).unwrap()
    }

    fn noisy(g: &GridSpec, cfg: &SolverConfig, seed: u64, rule: GammaRule, k_max: usize) -> Arc<NoisePath> {
        let spec = NoiseSpec {
            k_max,
            gamma_rule: rule,
            seed,
            t_final: cfg.t_final,
            n_steps: cfg.n_steps(),
        };
        let eig = grid::eigensystem(g, k_max).unwrap();
        Arc::new(noise::synthesize(&spec, g, &eig).unwrap())
    }

    fn power8() -> GammaRule {
        GammaRule::PowerLaw {
            gamma0: 1.0,
            exponent: 8.0,
        }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.0, 1e-3, 1.0).is_err());
        assert!(SolverConfig::new(0.1, 0.3, 1.0).is_err());
        assert!(SolverConfig::new(0.1, -1.0, 1.0).is_err());
        let c = SolverConfig::new(0.1, 1e-3, 0.5).unwrap();
        assert_eq!(c.n_steps(), 500);
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = grid(15);
        let cfg = SolverConfig::new(1e-2, 5e-4, 0.1).unwrap();
        let out = step_implicit(&g.zeros(), &g.zeros(), &cfg).unwrap();
        assert_eq!(out.y, g.zeros());
        assert_eq!(out.newton_iters, 0);
        assert_eq!(step_explicit(&g.zeros(), &g.zeros(), &cfg).unwrap(), g.zeros());
    }

    #[test]
    fn two_node_symmetric_step_matches_scalar_bisection() {
        // With y_1 = y_2 the stencil gives (Δ_h v)_j = -v_j/h², so each node solves
        // the scalar monotone equation Y + (Δt/h²) Ψ̄_ε(Y + w) = y_prev.
        let g = grid(2);
        let h = g.h();
        let cfg = SolverConfig::new(0.05, 1e-2, 1.0).unwrap();
        let (y_prev, w) = (1.7, -0.4);
        let out = step_implicit(
            &Field::new(g, vec![y_prev; 2]).unwrap(),
            &Field::new(g, vec![w; 2]).unwrap(),
            &cfg,
        )
        .unwrap();
        let f = |y: f64| y + cfg.dt / (h * h) * psi_bar(cfg.epsilon, y + w) - y_prev;
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        for v in out.y.values() {
            assert!((v - 0.5 * (lo + hi)).abs() < 1e-10, "{v} vs {lo}");
        }
    }

    #[test]
    fn small_steps_move_linearly() {
        let g = grid(31);
        let y0 = g.sample(|x| (std::f64::consts::PI * x).sin()).unwrap();
        let w = g.zeros();
        let moves: Vec<f64> = [1e-3, 1e-4]
            .iter()
            .map(|&dt| {
                let cfg = SolverConfig::new(1e-2, dt, 1.0).unwrap();
                let y = step_implicit(&y0, &w, &cfg).unwrap().y;
                grid::norm_l2(&y.sub(&y0).unwrap())
            })
            .collect();
        let ratio = moves[0] / moves[1];
        assert!(ratio > 8.0 && ratio < 11.0, "ratio {ratio}");
    }

    #[test]
    fn explicit_guard() {
        let g = grid(15);
        let h = g.h();
        let eps = 0.1;
        let cfg = SolverConfig {
            dt: h * h / eps,
            t_final: h * h / eps,
            ..SolverConfig::new(eps, 1e-3, 1.0).unwrap()
        };
        let y = g.constant(0.01).unwrap();
        assert!(matches!(
            step_explicit(&y, &g.zeros(), &cfg),
            Err(SolverError::ExplicitUnstable { .. })
        ));
    }

    #[test]
    fn explicit_and_implicit_agree_to_second_order_per_step() {
        let g = grid(15);
        let y0 = g.sample(|x| 2.0 * (std::f64::consts::PI * x).sin()).unwrap();
        let w = g.zeros();
        let gaps: Vec<f64> = [1e-4, 5e-5]
            .iter()
            .map(|&dt| {
                let cfg = SolverConfig::new(1e-2, dt, 1.0).unwrap();
                let a = step_implicit(&y0, &w, &cfg).unwrap().y;
                let b = step_explicit(&y0, &w, &cfg).unwrap();
                grid::norm_l2(&a.sub(&b).unwrap())
            })
            .collect();
        let ratio = gaps[0] / gaps[1];
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn zero_noise_zero_datum_stays_zero() {
        let g = grid(15);
        let cfg = SolverConfig::new(1e-2, 1e-2, 0.2).unwrap();
        let noise = Arc::new(noise::zero_path(&g, 0.2, 20).unwrap());
        let tr = solve_path(&g.zeros(), &noise, &cfg).unwrap();
        assert!(tr.x_fields().iter().all(|f| f == &g.zeros()));
        assert_eq!(tr.n_steps(), 20);
    }

    #[test]
    fn deterministic_l2_contraction() {
        let g = grid(31);
        let cfg = SolverConfig::new(1e-2, 1e-3, 0.2).unwrap();
        let noise = Arc::new(noise::zero_path(&g, 0.2, 200).unwrap());
        let x0 = g.sample(|x| 5.0 * x * (1.0 - x)).unwrap();
        let tr = solve_path(&x0, &noise, &cfg).unwrap();
        let norms: Vec<f64> = tr.x_fields().iter().map(grid::norm_l2).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));
        assert!(tr.diagnostics().iter().all(|d| d.residual <= cfg.newton_tol));
    }

    #[test]
    fn hminus1_contraction_for_state_pairs() {
        let g = grid(31);
        let cfg = SolverConfig::new(1e-2, 1e-3, 1.0).unwrap();
        let w = g.sample(|x| 0.3 * (3.0 * x).sin()).unwrap();
        let a = g.sample(|x| 4.0 * x * (1.0 - x)).unwrap();
        let b = g.sample(|x| -2.0 * (7.0 * x).sin() * x).unwrap();
        let before = grid::norm_hminus1(&a.sub(&b).unwrap()).unwrap();
        let ya = step_implicit(&a, &w, &cfg).unwrap().y;
        let yb = step_implicit(&b, &w, &cfg).unwrap().y;
        let after = grid::norm_hminus1(&ya.sub(&yb).unwrap()).unwrap();
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn symmetry_preserved_with_odd_modes() {
        let g = grid(31);
        let cfg = SolverConfig::new(1e-2, 1e-3, 0.1).unwrap();
        let rule = GammaRule::Explicit {
            values: vec![1.0, 0.0, 0.3, 0.0, 0.05],
        };
        let noise = noisy(&g, &cfg, 17, rule, 5);
        let x0 = g.sample(|x| 3.0 * x * (1.0 - x)).unwrap();
        let tr = solve_path(&x0, &noise, &cfg).unwrap();
        for x in tr.x_fields() {
            let v = x.values();
            let n = v.len();
            for j in 0..n / 2 {
                assert!((v[j] - v[n - 1 - j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn solve_path_is_reproducible() {
        let g = grid(31);
        let cfg = SolverConfig::new(1e-2, 1e-3, 0.1).unwrap();
        let x0 = g.sample(|x| x * (1.0 - x)).unwrap();
        let a = solve_path(&x0, &noisy(&g, &cfg, 3, power8(), 8), &cfg).unwrap();
        let b = solve_path(&x0, &noisy(&g, &cfg, 3, power8(), 8), &cfg).unwrap();
        assert_eq!(grid::norm_l2(a.final_x()).to_bits(), grid::norm_l2(b.final_x()).to_bits());
        for (n, x) in a.x_fields().iter().enumerate() {
            assert_eq!(x, &a.y_fields()[n].add(&a.noise().values()[n]).unwrap());
        }
    }

    #[test]
    fn noise_grid_mismatch_rejected() {
        let g = grid(15);
        let cfg = SolverConfig::new(1e-2, 1e-3, 0.1).unwrap();
        let noise = Arc::new(noise::zero_path(&g, 0.1, 50).unwrap());
        assert!(matches!(
            solve_path(&g.zeros(), &noise, &cfg),
            Err(SolverError::NoiseMismatch(_))
        ));
    }

    #[test]
    fn sweep_zero_case_and_repeated_epsilon() {
        let g = grid(15);
        let cfg = SolverConfig::new(1e-2, 1e-2, 0.1).unwrap();
        let zero = Arc::new(noise::zero_path(&g, 0.1, 10).unwrap());
        let rep = epsilon_sweep(&g.zeros(), &zero, &cfg, &[0.1, 0.01, 0.001]).unwrap();
        assert!(rep.distances.iter().flatten().all(|&d| d == 0.0));

        let noise = noisy(&g, &cfg, 5, power8(), 4);
        let x0 = g.sample(|x| x * (1.0 - x)).unwrap();
        let rep = epsilon_sweep(&x0, &noise, &cfg, &[0.05, 0.05]).unwrap();
        assert_eq!(rep.consecutive, vec![0.0]);
        assert!(epsilon_sweep(&x0, &noise, &cfg, &[0.01, 0.1]).is_err());
        assert!(epsilon_sweep(&x0, &noise, &cfg, &[0.01]).is_err());
    }

    #[test]
    fn csv_headers() {
        let g = grid(3);
        let cfg = SolverConfig::new(1e-2, 0.5, 1.0).unwrap();
        let noise = Arc::new(noise::zero_path(&g, 1.0, 2).unwrap());
        let tr = solve_path(&g.constant(1.0).unwrap(), &noise, &cfg).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("step,time,node,Y,X\n"));
        assert_eq!(s.lines().count(), 1 + 3 * 3);
        let mut buf = Vec::new();
        tr.write_diagnostics_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("step,newton_iters,residual\n"));
        assert_eq!(s.lines().count(), 3);
    }
}
