//! Config-driven batch experiments.
//!
//! A TOML file with the sections `[grid]`, `[noise]`, `[solver]`, `[initial]`,
//! `[verify]` and `[output]` describes a run; unknown keys are rejected. Each
//! `cmd_*` function writes its CSV artifacts into the output directory and
//! returns an [`Outcome`] whose [`Outcome::exit_code`] follows the convention
//! 0 = success, 1 = check failure, 2 = config error, 3 = solver failure.
//!
//! Path `i` of an ensemble uses seed `noise.seed + i`. Paths run in parallel
//! and results are merged in path order, so artifacts are byte-identical
//! regardless of the worker count.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, EigenSystem, Field, GridSpec};
use crate::noise::{self, GammaRule, NoisePath, NoiseSpec};
use crate::nonlinearity::RegularizationParam;
use crate::solver::{self, Scheme, SolverConfig, SolverError, Trajectory};
use crate::verifier::{self, Report};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Crate version plus config schema version, as printed by `--version`.
pub const VERSION_STRING: &str = concat!(env!("CARGO_PKG_VERSION"), " (config schema 1)");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failed on path with seed {seed}: {source}")]
    Solver {
        seed: u64,
        #[source]
        source: SolverError,
    },
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Io { .. } => 2,
            ExperimentError::Solver { .. } => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Config(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "defaults::length")]
    pub length: f64,
    #[serde(default = "defaults::n_interior")]
    pub n_interior: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "defaults::k_max")]
    pub k_max: usize,
    #[serde(default = "defaults::gamma0")]
    pub gamma0: f64,
    #[serde(default = "defaults::exponent")]
    pub exponent: f64,
    /// Explicit `γ_k` list; overrides the power law when present.
    #[serde(default)]
    pub gammas: Option<Vec<f64>>,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::n_paths")]
    pub n_paths: usize,
    /// Oscillation threshold for the modulus-of-continuity partition.
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    /// Strictly decreasing list used by `sweep-eps`.
    #[serde(default = "defaults::sweep_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::t_final")]
    pub t_final: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "defaults::newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "defaults::newton_max_iter")]
    pub newton_max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Zero,
    /// `c ξ(L - ξ)`
    #[default]
    Bump,
    /// `c e_k`
    Mode,
    /// Nodal values from a CSV file with a `value` column.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub profile: Profile,
    #[serde(default = "defaults::amplitude")]
    pub amplitude: f64,
    #[serde(default = "defaults::mode")]
    pub mode: usize,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    ItoL2Bound,
    PsiL1,
    ViResidual,
    TotalVariation,
    Hminus1Sup,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::ItoL2Bound,
        Check::PsiL1,
        Check::ViResidual,
        Check::TotalVariation,
        Check::Hminus1Sup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::ItoL2Bound => "ito_l2_bound",
            Check::PsiL1 => "psi_l1",
            Check::ViResidual => "vi_residual",
            Check::TotalVariation => "total_variation",
            Check::Hminus1Sup => "hminus1_sup",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "defaults::checks")]
    pub checks: Vec<Check>,
    /// Resolvent parameter of the test process `Z = J_μ Y_ε`.
    #[serde(default = "defaults::mu")]
    pub mu: f64,
    /// `tol_vi = vi_constant · (dt + ε)`
    #[serde(default = "defaults::vi_constant")]
    pub vi_constant: f64,
    /// Upper bound on max/min across ε for the ε-independence proxies.
    #[serde(default = "defaults::ratio_limit")]
    pub ratio_limit: f64,
    #[serde(default = "defaults::bound_epsilons")]
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "defaults::out_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub dump_trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "defaults::grid")]
    pub grid: GridSection,
    #[serde(default = "defaults::noise")]
    pub noise: NoiseSection,
    #[serde(default = "defaults::solver")]
    pub solver: SolverSection,
    #[serde(default = "defaults::initial")]
    pub initial: InitialSection,
    #[serde(default = "defaults::verify")]
    pub verify: VerifySection,
    #[serde(default = "defaults::output")]
    pub output: OutputSection,
    /// Directory relative paths in the config resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

mod defaults {
    use super::*;

    pub fn length() -> f64 {
        1.0
    }
    pub fn n_interior() -> usize {
        127
    }
    pub fn k_max() -> usize {
        8
    }
    pub fn gamma0() -> f64 {
        1.0
    }
    pub fn exponent() -> f64 {
        8.0
    }
    pub fn seed() -> u64 {
        42
    }
    pub fn n_paths() -> usize {
        200
    }
    pub fn alpha() -> f64 {
        0.5
    }
    pub fn epsilon() -> f64 {
        1e-2
    }
    pub fn sweep_epsilons() -> Vec<f64> {
        vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
    }
    pub fn bound_epsilons() -> Vec<f64> {
        vec![1e-1, 1e-2, 1e-3, 1e-4]
    }
    pub fn dt() -> f64 {
        1e-3
    }
    pub fn t_final() -> f64 {
        0.5
    }
    pub fn newton_tol() -> f64 {
        SolverConfig::DEFAULT_NEWTON_TOL
    }
    pub fn newton_max_iter() -> usize {
        SolverConfig::DEFAULT_NEWTON_MAX_ITER
    }
    pub fn amplitude() -> f64 {
        4.0
    }
    pub fn mode() -> usize {
        1
    }
    pub fn checks() -> Vec<Check> {
        Check::ALL.to_vec()
    }
    pub fn mu() -> f64 {
        1e-2
    }
    pub fn vi_constant() -> f64 {
        1.0
    }
    pub fn ratio_limit() -> f64 {
        10.0
    }
    pub fn out_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn grid() -> GridSection {
        GridSection {
            length: length(),
            n_interior: n_interior(),
        }
    }
    pub fn noise() -> NoiseSection {
        NoiseSection {
            k_max: k_max(),
            gamma0: gamma0(),
            exponent: exponent(),
            gammas: None,
            seed: seed(),
            n_paths: n_paths(),
            alpha: alpha(),
        }
    }
    pub fn solver() -> SolverSection {
        SolverSection {
            epsilon: epsilon(),
            epsilons: sweep_epsilons(),
            dt: dt(),
            t_final: t_final(),
            scheme: Scheme::Implicit,
            newton_tol: newton_tol(),
            newton_max_iter: newton_max_iter(),
        }
    }
    pub fn initial() -> InitialSection {
        InitialSection {
            profile: Profile::Bump,
            amplitude: amplitude(),
            mode: mode(),
            file: None,
        }
    }
    pub fn verify() -> VerifySection {
        VerifySection {
            checks: checks(),
            mu: mu(),
            vi_constant: vi_constant(),
            ratio_limit: ratio_limit(),
            epsilons: bound_epsilons(),
        }
    }
    pub fn output() -> OutputSection {
        OutputSection {
            dir: out_dir(),
            dump_trajectories: false,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: defaults::grid(),
            noise: defaults::noise(),
            solver: defaults::solver(),
            initial: defaults::initial(),
            verify: defaults::verify(),
            output: defaults::output(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(config_err)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.grid_spec()?;
        self.solver_config(self.solver.epsilon)?;
        self.noise_spec(0)?.validate().map_err(config_err)?;
        if self.noise.k_max > self.grid.n_interior {
            return Err(config_err(format!(
                "k_max = {} exceeds n_interior = {}",
                self.noise.k_max, self.grid.n_interior
            )));
        }
        if self.initial.profile == Profile::Mode && !(1..=self.grid.n_interior).contains(&self.initial.mode) {
            return Err(config_err(format!("initial mode {} out of range", self.initial.mode)));
        }
        if self.initial.profile == Profile::Csv {
            let file = self.initial_file()?;
            if !file.exists() {
                return Err(config_err(format!("initial datum file {} does not exist", file.display())));
            }
        }
        if !self.initial.amplitude.is_finite() {
            return Err(config_err("initial amplitude must be finite"));
        }
        if !(self.verify.mu > 0.0 && self.verify.vi_constant >= 0.0 && self.verify.ratio_limit >= 1.0) {
            return Err(config_err("verify: need mu > 0, vi_constant >= 0, ratio_limit >= 1"));
        }
        for &e in self.solver.epsilons.iter().chain(&self.verify.epsilons) {
            RegularizationParam::new(e).map_err(config_err)?;
        }
        if !(self.noise.alpha > 0.0) {
            return Err(config_err("noise.alpha must be positive"));
        }
        Ok(())
    }

    fn initial_file(&self) -> Result<PathBuf, ExperimentError> {
        let file = self
            .initial
            .file
            .as_ref()
            .ok_or_else(|| config_err("profile = \"csv\" requires initial.file"))?;
        Ok(if file.is_absolute() {
            file.clone()
        } else {
            self.base_dir.join(file)
        })
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ExperimentError> {
        GridSpec::new(self.grid.length, self.grid.n_interior).map_err(config_err)
    }

    pub fn gamma_rule(&self) -> GammaRule {
        match &self.noise.gammas {
            Some(values) => GammaRule::Explicit { values: values.clone() },
            None => GammaRule::PowerLaw {
                gamma0: self.noise.gamma0,
                exponent: self.noise.exponent,
            },
        }
    }

    pub fn seed_for_path(&self, path: usize) -> u64 {
        self.noise.seed.wrapping_add(path as u64)
    }

    pub fn noise_spec(&self, path: usize) -> Result<NoiseSpec, ExperimentError> {
        let cfg = self.solver_config(self.solver.epsilon)?;
        Ok(NoiseSpec {
            k_max: self.noise.k_max,
            gamma_rule: self.gamma_rule(),
            seed: self.seed_for_path(path),
            t_final: self.solver.t_final,
            n_steps: cfg.n_steps(),
        })
    }

    pub fn solver_config(&self, epsilon: f64) -> Result<SolverConfig, ExperimentError> {
        let mut cfg = SolverConfig::new(epsilon, self.solver.dt, self.solver.t_final).map_err(config_err)?;
        cfg.scheme = self.solver.scheme;
        cfg.newton_tol = self.solver.newton_tol;
        cfg.newton_max_iter = self.solver.newton_max_iter;
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn initial_datum(&self) -> Result<Field, ExperimentError> {
        let g = self.grid_spec()?;
        let c = self.initial.amplitude;
        match self.initial.profile {
            Profile::Zero => Ok(g.zeros()),
            Profile::Bump => g.sample(|x| c * x * (g.length() - x)).map_err(config_err),
            Profile::Mode => {
                let eig = grid::eigensystem(&g, self.initial.mode).map_err(config_err)?;
                Ok(eig.modes()[self.initial.mode - 1].vector.scale(c))
            }
            Profile::Csv => read_nodal_csv(&self.initial_file()?, &g),
        }
    }
}

/// Reads nodal values from a CSV with a `value` column (one row per interior node, in order).
pub fn read_nodal_csv(path: &Path, grid: &GridSpec) -> Result<Field, ExperimentError> {
    let io = |m: String| ExperimentError::Io {
        path: path.to_path_buf(),
        message: m,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| io(e.to_string()))?;
    let col = r
        .headers()
        .map_err(|e| io(e.to_string()))?
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| config_err(format!("{} has no `value` column", path.display())))?;
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io(e.to_string()))?;
        let v: f64 = rec
            .get(col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        values.push(v);
    }
    Field::new(*grid, values).map_err(config_err)
}

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub paths: Option<usize>,
    pub dump_trajectories: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

struct Context {
    cfg: ExperimentConfig,
    grid: GridSpec,
    eigen: EigenSystem,
    x0: Field,
    out_dir: PathBuf,
    dump: bool,
    files: Vec<PathBuf>,
}

impl Context {
    fn new(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Self, ExperimentError> {
        let mut cfg = cfg.clone();
        cfg.validate()?;
        if let Some(p) = opts.paths {
            cfg.noise.n_paths = p;
        }
        let grid = cfg.grid_spec()?;
        let eigen = grid::eigensystem(&grid, cfg.noise.k_max).map_err(config_err)?;
        let x0 = cfg.initial_datum()?;
        let out_dir = opts.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
        fs::create_dir_all(&out_dir).map_err(|e| ExperimentError::Io {
            path: out_dir.clone(),
            message: e.to_string(),
        })?;
        let dump = opts.dump_trajectories || cfg.output.dump_trajectories;
        Ok(Self {
            cfg,
            grid,
            eigen,
            x0,
            out_dir,
            dump,
            files: Vec::new(),
        })
    }

    fn noise(&self, path: usize) -> Result<Arc<NoisePath>, ExperimentError> {
        let spec = self.cfg.noise_spec(path)?;
        noise::synthesize(&spec, &self.grid, &self.eigen)
            .map(Arc::new)
            .map_err(config_err)
    }

    fn solve(&self, path: usize, epsilon: f64) -> Result<Trajectory, ExperimentError> {
        let noise = self.noise(path)?;
        let cfg = self.cfg.solver_config(epsilon)?;
        solver::solve_path(&self.x0, &noise, &cfg).map_err(|source| ExperimentError::Solver {
            seed: self.cfg.seed_for_path(path),
            source,
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, ExperimentError> {
        let path = self.out_dir.join(name);
        let f = File::create(&path).map_err(|e| ExperimentError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }

    fn io_err(&self, name: &str, e: impl std::fmt::Display) -> ExperimentError {
        ExperimentError::Io {
            path: self.out_dir.join(name),
            message: e.to_string(),
        }
    }

    fn write_report(&mut self, report: &Report) -> Result<(), ExperimentError> {
        let name = format!("report_{}.csv", report.name);
        let w = self.create(&name)?;
        report.write_csv(w).map_err(|e| self.io_err(&name, e))
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), ExperimentError> {
        use std::io::Write;
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes()).map_err(|e| self.io_err(name, e))
    }

    fn dump_trajectory(&mut self, tr: &Trajectory, tag: &str) -> Result<(), ExperimentError> {
        let name = format!("trajectory_{tag}.csv");
        let w = self.create(&name)?;
        tr.write_csv(w).map_err(|e| self.io_err(&name, e))?;
        let name = format!("diagnostics_{tag}.csv");
        let w = self.create(&name)?;
        tr.write_diagnostics_csv(w).map_err(|e| self.io_err(&name, e))
    }
}

fn csv_writer(w: BufWriter<File>) -> csv::Writer<BufWriter<File>> {
    csv::Writer::from_writer(w)
}

/// Runs `n_paths` trajectories and writes `summary.csv`
/// (`path,seed,final_l2,final_hminus1,newton_iters_total,newton_iters_max,max_residual`).
pub fn cmd_simulate(config: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome, ExperimentError> {
    let mut ctx = Context::new(config, opts)?;
    let n_paths = ctx.cfg.noise.n_paths;
    let eps = ctx.cfg.solver.epsilon;
    let results: Vec<Trajectory> = (0..n_paths)
        .into_par_iter()
        .map(|i| ctx.solve(i, eps))
        .collect::<Result<_, _>>()?;

    let name = "summary.csv";
    let mut w = csv_writer(ctx.create(name)?);
    let io = |e: csv::Error| ExperimentError::Io {
        path: PathBuf::from(name),
        message: e.to_string(),
    };
    w.write_record([
        "path",
        "seed",
        "final_l2",
        "final_hminus1",
        "newton_iters_total",
        "newton_iters_max",
        "max_residual",
    ])
    .map_err(io)?;
    for (i, tr) in results.iter().enumerate() {
        let diags = tr.diagnostics();
        let total: usize = diags.iter().map(|d| d.newton_iters).sum();
        let max = diags.iter().map(|d| d.newton_iters).max().unwrap_or(0);
        let resid = diags.iter().map(|d| d.residual).fold(0.0, f64::max);
        let hm = grid::norm_hminus1(tr.final_x()).map_err(config_err)?;
        w.write_record([
            i.to_string(),
            ctx.cfg.seed_for_path(i).to_string(),
            grid::norm_l2(tr.final_x()).to_string(),
            hm.to_string(),
            total.to_string(),
            max.to_string(),
            resid.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ctx.io_err(name, e))?;
    drop(w);
    if ctx.dump {
        for (i, tr) in results.iter().enumerate() {
            let tag = ctx.cfg.seed_for_path(i).to_string();
            ctx.dump_trajectory(tr, &tag)?;
        }
    }
    Ok(Outcome {
        passed: true,
        summary: format!("simulated {n_paths} paths into {}\n", ctx.out_dir.display()),
        files: ctx.files,
    })
}

/// ε-sweep on the first path: writes `sweep_matrix.csv` and `sweep_curve.csv`
/// and passes when the consecutive distances strictly decrease.
pub fn cmd_sweep_eps(config: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome, ExperimentError> {
    let mut ctx = Context::new(config, opts)?;
    let eps = ctx.cfg.solver.epsilons.clone();
    if eps.len() < 2 || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(config_err("solver.epsilons needs >= 2 strictly decreasing values"));
    }
    let noise = ctx.noise(0)?;
    let cfg = ctx.cfg.solver_config(eps[0])?;
    let report = solver::epsilon_sweep(&ctx.x0, &noise, &cfg, &eps).map_err(|source| ExperimentError::Solver {
        seed: ctx.cfg.seed_for_path(0),
        source,
    })?;
    let w = ctx.create("sweep_matrix.csv")?;
    report.write_matrix_csv(w).map_err(|e| ctx.io_err("sweep_matrix.csv", e))?;
    let w = ctx.create("sweep_curve.csv")?;
    report.write_curve_csv(w).map_err(|e| ctx.io_err("sweep_curve.csv", e))?;
    if ctx.dump {
        for tr in &report.trajectories {
            let tag = format!("eps{}", tr.config().epsilon.get());
            ctx.dump_trajectory(tr, &tag)?;
        }
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "consecutive sup-H^-1 distances:");
    for (i, d) in report.consecutive.iter().enumerate() {
        let _ = writeln!(summary, "  eps {:e} -> {:e}: {:e}", eps[i], eps[i + 1], d);
    }
    let _ = writeln!(summary, "strictly decreasing: {}", report.strictly_decreasing);
    ctx.write_text("sweep_summary.txt", &summary)?;
    Ok(Outcome {
        passed: report.strictly_decreasing,
        summary,
        files: ctx.files,
    })
}

/// Runs the selected verifier checks, writes one `report_<check>.csv` each
/// plus `verify_summary.txt`.
pub fn cmd_verify(config: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome, ExperimentError> {
    let mut ctx = Context::new(config, opts)?;
    if ctx.cfg.verify.checks.is_empty() {
        return Err(config_err("verify.checks is empty"));
    }
    let checks = ctx.cfg.verify.checks.clone();
    let v = ctx.cfg.verify.clone();
    let mut reports = Vec::new();

    // Trajectories across the ε list at the first seed, shared by the ε-proxies.
    let needs_sweep = checks
        .iter()
        .any(|c| matches!(c, Check::PsiL1 | Check::TotalVariation | Check::Hminus1Sup));
    let sweep: Vec<Trajectory> = if needs_sweep {
        v.epsilons
            .par_iter()
            .map(|&e| ctx.solve(0, e))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };

    for check in checks {
        let report = match check {
            Check::ItoL2Bound => {
                let n = ctx.cfg.noise.n_paths;
                let eps = ctx.cfg.solver.epsilon;
                let ensemble: Vec<Trajectory> = (0..n)
                    .into_par_iter()
                    .map(|i| ctx.solve(i, eps))
                    .collect::<Result<_, _>>()?;
                let spec = ctx.cfg.noise_spec(0)?;
                verifier::ito_l2_bound(&ensemble, &spec, &ctx.eigen).map_err(config_err)?
            }
            Check::PsiL1 => {
                let vals: Vec<f64> = sweep.iter().map(verifier::psi_l1_estimate).collect();
                verifier::bounded_ratio("psi_l1", &v.epsilons, &vals, v.ratio_limit)
            }
            Check::TotalVariation => {
                let vals = sweep
                    .iter()
                    .map(verifier::total_variation_diag)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(config_err)?;
                verifier::bounded_ratio("total_variation", &v.epsilons, &vals, v.ratio_limit)
            }
            Check::Hminus1Sup => {
                let vals = sweep
                    .iter()
                    .map(verifier::hminus1_sup_bound)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(config_err)?;
                verifier::bounded_ratio("hminus1_sup", &v.epsilons, &vals, v.ratio_limit)
            }
            Check::ViResidual => {
                let eps = ctx.cfg.solver.epsilon;
                let tr = ctx.solve(0, eps)?;
                let z = verifier::build_test_process(&tr, v.mu).map_err(config_err)?;
                let tol = v.vi_constant * (ctx.cfg.solver.dt + eps);
                verifier::vi_residual(&tr, &z, &ctx.x0, tol).map_err(config_err)?
            }
        };
        ctx.write_report(&report)?;
        reports.push(report);
    }

    let passed = reports.iter().all(Report::passed);
    let mut summary: String = reports.iter().map(Report::summary).collect();
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        summary.push_str("all checks passed\n");
    } else {
        let _ = writeln!(summary, "failed checks: {}", failed.join(", "));
    }
    ctx.write_text("verify_summary.txt", &summary)?;
    Ok(Outcome {
        passed,
        summary,
        files: ctx.files,
    })
}

/// Summability sums, per-path sup-norm estimates and the modulus-of-continuity
/// partition of the first path.
pub fn cmd_noise_check(config: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome, ExperimentError> {
    let mut ctx = Context::new(config, opts)?;
    let spec = ctx.cfg.noise_spec(0)?;
    let h1 = noise::validate_h1(&spec, &ctx.eigen).map_err(config_err)?;
    let opt = |v: Option<f64>| v.map(|m| m.to_string()).unwrap_or_else(|| "NA".into());
    let text = format!(
        "quantity,value\nsum_gamma2_lambda2,{}\nsum_gamma_lambda3,{}\nmargin_quadratic,{}\nmargin_cubic,{}\npassed,{}\n",
        h1.sum_quadratic,
        h1.sum_cubic,
        opt(h1.margin_quadratic),
        opt(h1.margin_cubic),
        h1.passed
    );
    ctx.write_text("h1.csv", &text)?;
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "H1: sum_quadratic = {:e}, sum_cubic = {:e}, margins = ({}, {}), {}",
        h1.sum_quadratic,
        h1.sum_cubic,
        opt(h1.margin_quadratic),
        opt(h1.margin_cubic),
        if h1.passed { "PASS" } else { "FAIL" }
    );
    if !h1.passed {
        return Ok(Outcome {
            passed: false,
            summary,
            files: ctx.files,
        });
    }

    let n_paths = ctx.cfg.noise.n_paths;
    let paths: Vec<Arc<NoisePath>> = (0..n_paths)
        .into_par_iter()
        .map(|i| ctx.noise(i))
        .collect::<Result<_, _>>()?;
    let mut text = String::from("path,seed,sup_norm\n");
    for (i, p) in paths.iter().enumerate() {
        let _ = writeln!(text, "{},{},{}", i, ctx.cfg.seed_for_path(i), noise::sup_norm_estimate(p));
    }
    ctx.write_text("sup_norm.csv", &text)?;
    if ctx.dump {
        for (i, p) in paths.iter().enumerate() {
            let name = format!("noise_{}.csv", ctx.cfg.seed_for_path(i));
            let w = ctx.create(&name)?;
            p.write_csv(w).map_err(|e| ctx.io_err(&name, e))?;
        }
    }

    let mut passed = true;
    if let Some(first) = paths.first() {
        match noise::modulus_of_continuity(first, ctx.cfg.noise.alpha) {
            Ok(points) => {
                let mut text = String::from("index,step,time\n");
                for (i, &s) in points.iter().enumerate() {
                    let _ = writeln!(text, "{},{},{}", i, s, first.time(s));
                }
                ctx.write_text("partition.csv", &text)?;
                let _ = writeln!(summary, "partition (alpha = {}): {} cells", ctx.cfg.noise.alpha, points.len() - 1);
            }
            Err(e) => {
                passed = false;
                let _ = writeln!(summary, "partition failed: {e}");
            }
        }
    }
    Ok(Outcome {
        passed,
        summary,
        files: ctx.files,
    })
}
