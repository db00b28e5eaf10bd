//! Numerical checks of the a-priori estimates and of the variational
//! inequality that defines solutions of the limit equation.
//!
//! Every check produces a [`Report`] whose rows record both sides of the
//! inequality being tested (`lhs <= rhs`), the margin `rhs - lhs` and the
//! verdict. Tolerances are folded into `rhs` so the CSV shows exactly what was
//! compared.

use std::fmt::Write as _;
use std::io::Write;

use thiserror::Error;

use crate::grid::{self, EigenSystem, Field, GridError};
use crate::noise::{NoisePath, NoiseSpec};
use crate::nonlinearity::{g, psi_yosida};
use crate::solver::Trajectory;

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("ensemble has {0} trajectories, need at least {MIN_ENSEMBLE}")]
    EnsembleTooSmall(usize),
    #[error("trajectories are not comparable: {0}")]
    Incompatible(String),
    #[error("test process inadmissible ({clause}): {detail}")]
    Inadmissible { clause: &'static str, detail: String },
    #[error("resolvent parameter must be positive, got {0}")]
    InvalidMu(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("report output failed: {0}")]
    Io(String),
}

pub const MIN_ENSEMBLE: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub check: String,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl ReportRow {
    pub fn new(check: impl Into<String>, t: f64, lhs: f64, rhs: f64) -> Self {
        Self {
            check: check.into(),
            t,
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub name: String,
    pub rows: Vec<ReportRow>,
    /// Named scalar results, in insertion order.
    pub scalars: Vec<(String, f64)>,
}

impl Report {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn min_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }

    fn push_scalar(&mut self, key: &str, v: f64) {
        self.scalars.push((key.to_string(), v));
    }

    /// Appends the rows of `other` (scalars are prefixed with its name).
    pub fn merge(&mut self, other: Report) {
        for (k, v) in other.scalars {
            self.scalars.push((format!("{}.{}", other.name, k), v));
        }
        self.rows.extend(other.rows);
    }

    /// Rows `check_name,t,lhs,rhs,margin,pass`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), VerifierError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| VerifierError::Io(e.to_string());
        w.write_record(["check_name", "t", "lhs", "rhs", "margin", "pass"]).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.check.clone(),
                r.t.to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.margin.to_string(),
                r.pass.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| VerifierError::Io(e.to_string()))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{}] {}", self.name, if self.passed() { "PASS" } else { "FAIL" });
        for (k, v) in &self.scalars {
            let _ = writeln!(s, "  {k} = {v:.6e}");
        }
        let failed = self.rows.iter().filter(|r| !r.pass).count();
        let _ = writeln!(
            s,
            "  rows = {}, failed = {}, min margin = {:.6e}",
            self.rows.len(),
            failed,
            self.min_margin()
        );
        s
    }
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Ensemble check of `E|X(t)|₂² <= |x|₂² + t Σ_k λ_k² γ_k²` at every grid time,
/// accepting the Monte Carlo mean up to three standard errors.
pub fn ito_l2_bound(ensemble: &[Trajectory], spec: &NoiseSpec, eigen: &EigenSystem) -> Result<Report, VerifierError> {
    if ensemble.len() < MIN_ENSEMBLE {
        return Err(VerifierError::EnsembleTooSmall(ensemble.len()));
    }
    let first = &ensemble[0];
    for tr in ensemble {
        if tr.times() != first.times() || tr.initial() != first.initial() {
            return Err(VerifierError::Incompatible(
                "ensemble members must share the time grid and initial datum".into(),
            ));
        }
    }
    if eigen.len() < spec.k_max {
        return Err(VerifierError::Incompatible(format!(
            "eigensystem has {} modes, noise uses {}",
            eigen.len(),
            spec.k_max
        )));
    }
    let trace: f64 = eigen.modes()[..spec.k_max]
        .iter()
        .map(|m| (m.eigenvalue * spec.gamma_rule.gamma(m.index)).powi(2))
        .sum();
    let x0_sq = grid::norm_l2(first.initial()).powi(2);

    let mut report = Report::new("ito_l2_bound");
    report.push_scalar("initial_l2_sq", x0_sq);
    report.push_scalar("sum_lambda2_gamma2", trace);
    report.push_scalar("paths", ensemble.len() as f64);
    for (n, &t) in first.times().iter().enumerate() {
        let samples: Vec<f64> = ensemble.iter().map(|tr| grid::norm_l2(&tr.x_fields()[n]).powi(2)).collect();
        let (mean, se) = mean_and_stderr(&samples);
        report.rows.push(ReportRow::new("ito_l2_bound", t, mean, x0_sq + t * trace + 3.0 * se));
    }
    // L⁴ moments are recorded without a verdict.
    let l4: Vec<f64> = ensemble
        .iter()
        .map(|tr| grid::norm_lp(tr.final_x(), 4.0))
        .collect::<Result<_, _>>()?;
    let (l4_mean, _) = mean_and_stderr(&l4);
    report.push_scalar("mean_final_l4", l4_mean);
    report.push_scalar("max_final_l4", l4.iter().copied().fold(0.0, f64::max));
    report.push_scalar("min_margin", report.min_margin());
    Ok(report)
}

/// `Σ_{n>=1} Δt · h Σ_j |Ψ_ε(X_j(t_n))|`, the space-time L¹ mass of the
/// Yosida flux (without the `εx` shift).
pub fn psi_l1_estimate(traj: &Trajectory) -> f64 {
    let eps = traj.config().epsilon;
    let h = traj.grid().h();
    let dt = traj.dt();
    traj.x_fields()[1..]
        .iter()
        .map(|x| dt * h * x.values().iter().map(|&v| psi_yosida(eps, v).abs()).sum::<f64>())
        .sum()
}

/// Observable versions of the three admissibility clauses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    /// i) `max_n |Z(t_n)|₂`
    pub sup_l2: f64,
    /// ii) `Σ_n Δt |Z'(t_n)|₋₁²`
    pub derivative_energy: f64,
    /// iii) `Σ_n Δt ∫ g(Z + √Q W)`
    pub g_integral: f64,
    /// iii) upper bound `Σ_n Δt |Z + √Q W|₂²` from `g(x) <= x²`
    pub g_integral_bound: f64,
}

#[derive(Debug, Clone)]
pub struct TestProcess {
    z_fields: Vec<Field>,
    z_prime: Vec<Field>,
    dt: f64,
    provenance: String,
    admissibility: Admissibility,
}

impl TestProcess {
    /// Builds a test process from its values on the time grid of `noise`;
    /// `Z'` is the centered difference (one-sided at the ends).
    pub fn from_fields(z_fields: Vec<Field>, noise: &NoisePath, provenance: impl Into<String>) -> Result<Self, VerifierError> {
        if z_fields.len() != noise.n_steps() + 1 {
            return Err(VerifierError::Incompatible(format!(
                "test process has {} times, noise has {}",
                z_fields.len(),
                noise.n_steps() + 1
            )));
        }
        if z_fields.iter().any(|z| z.grid() != noise.grid()) {
            return Err(GridError::GridMismatch.into());
        }
        let dt = noise.dt();
        let z_prime = time_derivative(&z_fields, dt)?;
        let admissibility = check_admissibility(&z_fields, &z_prime, noise.values(), dt)?;
        Ok(Self {
            z_fields,
            z_prime,
            dt,
            provenance: provenance.into(),
            admissibility,
        })
    }

    /// `Z = Y_ε` of the trajectory itself.
    pub fn state_of(traj: &Trajectory) -> Result<Self, VerifierError> {
        Self::from_fields(traj.y_fields().to_vec(), traj.noise(), "trajectory state")
    }

    /// `Z(t) = z` for all `t`.
    pub fn constant(z: &Field, noise: &NoisePath) -> Result<Self, VerifierError> {
        Self::from_fields(vec![z.clone(); noise.n_steps() + 1], noise, "constant")
    }

    pub fn z_fields(&self) -> &[Field] {
        &self.z_fields
    }

    pub fn z_prime(&self) -> &[Field] {
        &self.z_prime
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn admissibility(&self) -> &Admissibility {
        &self.admissibility
    }
}

/// Centered differences in time, one-sided at the two ends.
pub fn time_derivative(fields: &[Field], dt: f64) -> Result<Vec<Field>, GridError> {
    let n = fields.len();
    if n < 2 {
        return Ok(fields.iter().map(|f| f.scale(0.0)).collect());
    }
    (0..n)
        .map(|i| {
            let (a, b, span) = match i {
                0 => (0, 1, dt),
                _ if i == n - 1 => (n - 2, n - 1, dt),
                _ => (i - 1, i + 1, 2.0 * dt),
            };
            Ok(fields[b].sub(&fields[a])?.scale(1.0 / span))
        })
        .collect()
}

fn check_admissibility(z: &[Field], z_prime: &[Field], w: &[Field], dt: f64) -> Result<Admissibility, VerifierError> {
    let sup_l2 = z.iter().map(grid::norm_l2).fold(0.0, f64::max);
    if !sup_l2.is_finite() {
        return Err(VerifierError::Inadmissible {
            clause: "i",
            detail: "sup-in-time L2 norm is not finite".into(),
        });
    }
    let mut derivative_energy = 0.0;
    for zp in z_prime {
        derivative_energy += dt * grid::norm_hminus1(zp)?.powi(2);
    }
    if !derivative_energy.is_finite() {
        return Err(VerifierError::Inadmissible {
            clause: "ii",
            detail: "time derivative has infinite H^-1 energy".into(),
        });
    }
    let (mut g_integral, mut g_integral_bound) = (0.0, 0.0);
    for (zn, wn) in z.iter().zip(w) {
        let h = zn.grid().h();
        for (a, b) in zn.values().iter().zip(wn.values()) {
            let v = a + b;
            let gv = g(v);
            if !(gv >= 0.0 && gv <= v * v) {
                return Err(VerifierError::Inadmissible {
                    clause: "iii",
                    detail: format!("g({v}) = {gv} violates 0 <= g(x) <= x^2"),
                });
            }
            g_integral += dt * h * gv;
            g_integral_bound += dt * h * v * v;
        }
    }
    if !g_integral_bound.is_finite() {
        return Err(VerifierError::Inadmissible {
            clause: "iii",
            detail: "g(Z + sqrt(Q)W) not integrable".into(),
        });
    }
    Ok(Admissibility {
        sup_l2,
        derivative_energy,
        g_integral,
        g_integral_bound,
    })
}

/// `Z = J_μ Y_ε = (1 - μΔ_h)^{-1} Y_ε`, the smoothed test process.
pub fn build_test_process(traj: &Trajectory, mu: f64) -> Result<TestProcess, VerifierError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(VerifierError::InvalidMu(mu));
    }
    let z = traj
        .y_fields()
        .iter()
        .map(|y| grid::laplacian_resolvent(mu, y))
        .collect::<Result<Vec<_>, _>>()?;
    TestProcess::from_fields(z, traj.noise(), format!("J_mu of trajectory, mu = {mu}"))
}

/// Cumulative trapezoid rule on a uniform grid; `out[0] = 0`.
fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in values.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Both sides of the solution inequality at every grid time `t_n`:
///
/// ```text
/// LHS = ½|Y(t) - Z(t)|₋₁² + ∫₀ᵗ∫ g(X) + ∫₀ᵗ ⟨Z', Y - Z⟩₋₁
/// RHS = ½|x - Z(0)|₋₁² + ∫₀ᵗ∫ g(Z + √Q W)
/// ```
///
/// with `Y = X - √Q W`. A row passes when `LHS - RHS <= tol_vi`; the scalar
/// `max_residual` is `max_n (LHS - RHS)`.
pub fn vi_residual(traj: &Trajectory, z: &TestProcess, x0: &Field, tol_vi: f64) -> Result<Report, VerifierError> {
    let n_times = traj.times().len();
    if z.z_fields().len() != n_times || (z.dt() - traj.dt()).abs() > 1e-12 * traj.dt() {
        return Err(VerifierError::Incompatible(
            "test process and trajectory use different time grids".into(),
        ));
    }
    if x0.grid() != traj.grid() {
        return Err(GridError::GridMismatch.into());
    }
    let h = traj.grid().h();
    let w = traj.noise().values();
    let dt = traj.dt();

    let mut distance = Vec::with_capacity(n_times);
    let mut g_x = Vec::with_capacity(n_times);
    let mut mixed = Vec::with_capacity(n_times);
    let mut g_z = Vec::with_capacity(n_times);
    for n in 0..n_times {
        let y = &traj.y_fields()[n];
        let zn = &z.z_fields()[n];
        let gap = y.sub(zn)?;
        distance.push(0.5 * grid::norm_hminus1(&gap)?.powi(2));
        g_x.push(h * traj.x_fields()[n].values().iter().map(|&v| g(v)).sum::<f64>());
        mixed.push(grid::inner_hminus1(&z.z_prime()[n], &gap)?);
        g_z.push(h * zn.values().iter().zip(w[n].values()).map(|(a, b)| g(a + b)).sum::<f64>());
    }
    let int_gx = cumulative_trapezoid(&g_x, dt);
    let int_mixed = cumulative_trapezoid(&mixed, dt);
    let int_gz = cumulative_trapezoid(&g_z, dt);
    let initial = 0.5 * grid::norm_hminus1(&x0.sub(&z.z_fields()[0])?)?.powi(2);

    let mut report = Report::new("vi_residual");
    let mut max_residual = f64::NEG_INFINITY;
    for n in 0..n_times {
        let lhs = distance[n] + int_gx[n] + int_mixed[n];
        let rhs = initial + int_gz[n];
        max_residual = max_residual.max(lhs - rhs);
        report.rows.push(ReportRow::new("vi_residual", traj.times()[n], lhs, rhs + tol_vi));
    }
    report.push_scalar("max_residual", max_residual);
    report.push_scalar("tol_vi", tol_vi);
    Ok(report)
}

/// `sup_n |X_a(t_n) - X_b(t_n)|₋₁` over the common time grid of two
/// trajectories driven by the same noise realization.
pub fn uniqueness_distance(a: &Trajectory, b: &Trajectory) -> Result<f64, VerifierError> {
    let (na, nb) = (a.noise().spec(), b.noise().spec());
    if na.seed != nb.seed || na.gamma_rule != nb.gamma_rule || na.k_max != nb.k_max {
        return Err(VerifierError::Incompatible("trajectories use different noise realizations".into()));
    }
    if a.initial() != b.initial() {
        return Err(VerifierError::Incompatible("initial data differ".into()));
    }
    let (sa, sb) = common_strides(a, b)?;
    let mut sup: f64 = 0.0;
    for (xa, xb) in a.x_fields().iter().step_by(sa).zip(b.x_fields().iter().step_by(sb)) {
        sup = sup.max(grid::norm_hminus1(&xa.sub(xb)?)?);
    }
    for (wa, wb) in a.noise().values().iter().step_by(sa).zip(b.noise().values().iter().step_by(sb)) {
        if wa != wb {
            return Err(VerifierError::Incompatible(
                "noise values differ at a common time".into(),
            ));
        }
    }
    Ok(sup)
}

/// Index strides mapping both trajectories onto their common (coarser) grid.
fn common_strides(a: &Trajectory, b: &Trajectory) -> Result<(usize, usize), VerifierError> {
    let (ta, tb) = (*a.times().last().unwrap(), *b.times().last().unwrap());
    if (ta - tb).abs() > 1e-12 * ta.max(tb) {
        return Err(VerifierError::Incompatible("different final times".into()));
    }
    let (ma, mb) = (a.n_steps(), b.n_steps());
    let (coarse, fine) = (ma.min(mb), ma.max(mb));
    if fine % coarse != 0 {
        return Err(VerifierError::Incompatible(format!(
            "time grids with {ma} and {mb} steps are not nested"
        )));
    }
    let r = fine / coarse;
    Ok(if ma >= mb { (r, 1) } else { (1, r) })
}

/// `Σ_n |(-Δ_h)^{-1}(Y(t_{n+1}) - Y(t_n))|₋₁` over the full time grid.
pub fn total_variation_diag(traj: &Trajectory) -> Result<f64, VerifierError> {
    let all: Vec<usize> = (0..=traj.n_steps()).collect();
    total_variation_on(traj, &all)
}

/// The same sum restricted to a sub-partition given by increasing step indices.
pub fn total_variation_on(traj: &Trajectory, points: &[usize]) -> Result<f64, VerifierError> {
    let y = traj.y_fields();
    if points.windows(2).any(|w| w[0] >= w[1]) || points.last().is_some_and(|&p| p >= y.len()) {
        return Err(VerifierError::Incompatible("partition must be increasing and inside the grid".into()));
    }
    let mut total = 0.0;
    for w in points.windows(2) {
        let potential = grid::neg_laplacian_inverse(&y[w[1]].sub(&y[w[0]])?)?;
        total += grid::norm_hminus1(&potential)?;
    }
    Ok(total)
}

/// `max_n |Y(t_n)|₋₁²`
pub fn hminus1_sup_bound(traj: &Trajectory) -> Result<f64, VerifierError> {
    let mut m: f64 = 0.0;
    for y in traj.y_fields() {
        m = m.max(grid::norm_hminus1(y)?.powi(2));
    }
    Ok(m)
}

/// Boundedness proxy for quantities claimed independent of ε: one row with
/// `lhs = max/min` and `rhs = limit`.
pub fn bounded_ratio(name: &str, epsilons: &[f64], values: &[f64], limit: f64) -> Report {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if max == 0.0 && min == 0.0 { 1.0 } else { max / min };
    let mut report = Report::new(name);
    for (e, v) in epsilons.iter().zip(values) {
        report.push_scalar(&format!("eps={e}"), *v);
    }
    report.push_scalar("ratio", ratio);
    report.rows.push(ReportRow::new(name, f64::NAN, ratio, limit));
    report
}
