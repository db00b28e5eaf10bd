//! Q-Wiener forcing `√Q W(t) = Σ_k γ_k β_k(t) e_k` on the sine basis.
//!
//! Each mode draws its Brownian increments from its own ChaCha stream keyed by
//! the master seed and the mode index, so changing `k_max` never reshuffles the
//! lower modes.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, EigenSystem, Field, GridError, GridSpec};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("k_max must be at least 1")]
    NoModes,
    #[error("k_max = {k_max} exceeds the {n_interior} representable modes")]
    TooManyModes { k_max: usize, n_interior: usize },
    #[error("eigensystem provides {available} modes, need {k_max}")]
    MissingEigenpairs { k_max: usize, available: usize },
    #[error("n_steps must be at least 1")]
    NoSteps,
    #[error("t_final must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("gamma rule invalid: {0}")]
    InvalidGamma(String),
    #[error("summability hypothesis violated (quadratic margin {quadratic:?}, cubic margin {cubic:?})")]
    H1Violated { quadratic: Option<f64>, cubic: Option<f64> },
    #[error("one time step starting at index {step} already oscillates by {oscillation} >= alpha = {alpha}")]
    StepTooCoarse { step: usize, oscillation: f64, alpha: f64 },
    #[error("stride {stride} does not divide {n_steps} steps")]
    BadStride { stride: usize, n_steps: usize },
    #[error("malformed noise CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Rule producing the coefficients `γ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaRule {
    /// `γ_k = γ₀ k^{-r}`
    PowerLaw { gamma0: f64, exponent: f64 },
    /// Explicit coefficients; modes beyond the list get zero.
    Explicit { values: Vec<f64> },
}

impl GammaRule {
    pub fn gamma(&self, k: usize) -> f64 {
        match self {
            GammaRule::PowerLaw { gamma0, exponent } => gamma0 * (k as f64).powf(-exponent),
            GammaRule::Explicit { values } => k.checked_sub(1).and_then(|i| values.get(i)).copied().unwrap_or(0.0),
        }
    }

    fn validate(&self) -> Result<(), NoiseError> {
        match self {
            GammaRule::PowerLaw { gamma0, exponent } => {
                if !gamma0.is_finite() || *gamma0 < 0.0 {
                    return Err(NoiseError::InvalidGamma(format!("gamma0 = {gamma0}")));
                }
                if !exponent.is_finite() {
                    return Err(NoiseError::InvalidGamma(format!("exponent = {exponent}")));
                }
            }
            GammaRule::Explicit { values } => {
                if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
                    return Err(NoiseError::InvalidGamma(format!("coefficient {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> GammaRule {
        match self {
            GammaRule::PowerLaw { gamma0, exponent } => GammaRule::PowerLaw {
                gamma0: gamma0 * c,
                exponent: *exponent,
            },
            GammaRule::Explicit { values } => GammaRule::Explicit {
                values: values.iter().map(|v| v * c).collect(),
            },
        }
    }

    fn is_zero(&self, k_max: usize) -> bool {
        (1..=k_max).all(|k| self.gamma(k) == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub k_max: usize,
    pub gamma_rule: GammaRule,
    pub seed: u64,
    pub t_final: f64,
    pub n_steps: usize,
}

impl NoiseSpec {
    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn gammas(&self) -> Vec<f64> {
        (1..=self.k_max).map(|k| self.gamma_rule.gamma(k)).collect()
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if self.k_max == 0 {
            return Err(NoiseError::NoModes);
        }
        if self.n_steps == 0 {
            return Err(NoiseError::NoSteps);
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(NoiseError::InvalidHorizon(self.t_final));
        }
        self.gamma_rule.validate()
    }
}

/// Partial sums and exponent margins for the summability hypothesis on `γ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct H1Report {
    /// `Σ_{k≤K} γ_k² λ_k²`
    pub sum_quadratic: f64,
    /// `Σ_{k≤K} γ_k λ_k³`
    pub sum_cubic: f64,
    /// `2r - 5` for the power rule (summable iff positive).
    pub margin_quadratic: Option<f64>,
    /// `r - 7` for the power rule (summable iff positive).
    pub margin_cubic: Option<f64>,
    pub passed: bool,
}

pub fn validate_h1(spec: &NoiseSpec, eigen: &EigenSystem) -> Result<H1Report, NoiseError> {
    spec.validate()?;
    if eigen.len() < spec.k_max {
        return Err(NoiseError::MissingEigenpairs {
            k_max: spec.k_max,
            available: eigen.len(),
        });
    }
    let (mut sum_quadratic, mut sum_cubic) = (0.0, 0.0);
    for m in &eigen.modes()[..spec.k_max] {
        let gk = spec.gamma_rule.gamma(m.index);
        sum_quadratic += gk * gk * m.eigenvalue.powi(2);
        sum_cubic += gk * m.eigenvalue.powi(3);
    }
    let (margin_quadratic, margin_cubic) = match &spec.gamma_rule {
        // λ_k ~ k², so γ_k²λ_k² ~ k^{4-2r} and γ_kλ_k³ ~ k^{6-r}; summable iff exponent < -1.
        GammaRule::PowerLaw { gamma0, exponent } if *gamma0 > 0.0 => {
            (Some(-1.0 - (4.0 - 2.0 * exponent)), Some(-1.0 - (6.0 - exponent)))
        }
        _ => (None, None),
    };
    let passed = sum_quadratic.is_finite()
        && sum_cubic.is_finite()
        && margin_quadratic.is_none_or(|m| m > 0.0)
        && margin_cubic.is_none_or(|m| m > 0.0);
    Ok(H1Report {
        sum_quadratic,
        sum_cubic,
        margin_quadratic,
        margin_cubic,
        passed,
    })
}

/// One synthesized realization of `√Q W` on the uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    spec: NoiseSpec,
    grid: GridSpec,
    values: Vec<Field>,
    brownian: Vec<Vec<f64>>,
}

impl NoisePath {
    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `values()[n] = √Q W(t_n)`, `n = 0..=n_steps`.
    pub fn values(&self) -> &[Field] {
        &self.values
    }

    /// `brownian()[k-1][n] = β_k(t_n)`.
    pub fn brownian(&self) -> &[Vec<f64>] {
        &self.brownian
    }

    pub fn n_steps(&self) -> usize {
        self.spec.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.spec.dt()
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// Same realization sampled at every `stride`-th time.
    pub fn restrict(&self, stride: usize) -> Result<NoisePath, NoiseError> {
        if stride == 0 || self.spec.n_steps % stride != 0 {
            return Err(NoiseError::BadStride {
                stride,
                n_steps: self.spec.n_steps,
            });
        }
        let spec = NoiseSpec {
            n_steps: self.spec.n_steps / stride,
            ..self.spec.clone()
        };
        Ok(NoisePath {
            spec,
            grid: self.grid,
            values: self.values.iter().step_by(stride).cloned().collect(),
            brownian: self
                .brownian
                .iter()
                .map(|b| b.iter().step_by(stride).copied().collect())
                .collect(),
        })
    }

    /// Writes `step,time,node,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), NoiseError> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| NoiseError::Csv(e.to_string());
        w.write_record(["step", "time", "node", "value"]).map_err(csv_err)?;
        for (n, f) in self.values.iter().enumerate() {
            let t = self.time(n).to_string();
            for (j, v) in f.values().iter().enumerate() {
                w.write_record([n.to_string(), t.clone(), (j + 1).to_string(), v.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| NoiseError::Csv(e.to_string()))
    }

    /// Reads a path written by [`NoisePath::write_csv`].
    ///
    /// Brownian values are recovered by projecting onto the sine modes; modes with
    /// `γ_k = 0` get a zero path.
    pub fn read_csv<R: Read>(input: R, spec: &NoiseSpec, grid: &GridSpec) -> Result<NoisePath, NoiseError> {
        spec.validate()?;
        let n = grid.n_interior();
        let mut values = vec![vec![0.0; n]; spec.n_steps + 1];
        let mut seen = vec![vec![false; n]; spec.n_steps + 1];
        let mut r = csv::Reader::from_reader(input);
        for rec in r.records() {
            let rec = rec.map_err(|e| NoiseError::Csv(e.to_string()))?;
            let parse = |i: usize| rec.get(i).ok_or_else(|| NoiseError::Csv(format!("short row {rec:?}")));
            let step: usize = parse(0)?.parse().map_err(|e| NoiseError::Csv(format!("{e}")))?;
            let node: usize = parse(2)?.parse().map_err(|e| NoiseError::Csv(format!("{e}")))?;
            let value: f64 = parse(3)?.parse().map_err(|e| NoiseError::Csv(format!("{e}")))?;
            if step > spec.n_steps || node == 0 || node > n {
                return Err(NoiseError::Csv(format!("index out of range: step {step} node {node}")));
            }
            values[step][node - 1] = value;
            seen[step][node - 1] = true;
        }
        if seen.iter().flatten().any(|s| !s) {
            return Err(NoiseError::Csv("missing (step, node) entries".into()));
        }
        let values: Vec<Field> = values
            .into_iter()
            .map(|v| Field::new(*grid, v))
            .collect::<Result<_, _>>()?;
        let eigen = grid::eigensystem(grid, spec.k_max.min(n))?;
        let brownian = eigen
            .modes()
            .iter()
            .map(|m| {
                let gk = spec.gamma_rule.gamma(m.index);
                values
                    .iter()
                    .map(|f| {
                        if gk == 0.0 {
                            Ok(0.0)
                        } else {
                            grid::inner_l2(f, &m.vector).map(|c| c / gk)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NoisePath {
            spec: spec.clone(),
            grid: *grid,
            values,
            brownian,
        })
    }
}

fn mode_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// Synthesizes a path after checking the summability hypothesis.
pub fn synthesize(spec: &NoiseSpec, grid: &GridSpec, eigen: &EigenSystem) -> Result<NoisePath, NoiseError> {
    let report = validate_h1(spec, eigen)?;
    if !report.passed {
        return Err(NoiseError::H1Violated {
            quadratic: report.margin_quadratic,
            cubic: report.margin_cubic,
        });
    }
    synthesize_unchecked(spec, grid, eigen)
}

/// Synthesizes a path without the summability check (the truncated sum is
/// always finite, so this is well defined).
pub fn synthesize_unchecked(spec: &NoiseSpec, grid: &GridSpec, eigen: &EigenSystem) -> Result<NoisePath, NoiseError> {
    spec.validate()?;
    if spec.k_max > grid.n_interior() {
        return Err(NoiseError::TooManyModes {
            k_max: spec.k_max,
            n_interior: grid.n_interior(),
        });
    }
    if eigen.len() < spec.k_max {
        return Err(NoiseError::MissingEigenpairs {
            k_max: spec.k_max,
            available: eigen.len(),
        });
    }
    if eigen.grid() != grid {
        return Err(GridError::GridMismatch.into());
    }
    let sqrt_dt = spec.dt().sqrt();
    let brownian: Vec<Vec<f64>> = (1..=spec.k_max)
        .map(|k| {
            let mut rng = mode_rng(spec.seed, k);
            let mut b = Vec::with_capacity(spec.n_steps + 1);
            let mut acc = 0.0;
            b.push(acc);
            for _ in 0..spec.n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += sqrt_dt * z;
                b.push(acc);
            }
            b
        })
        .collect();

    let gammas = spec.gammas();
    let n = grid.n_interior();
    let values = (0..=spec.n_steps)
        .map(|step| {
            let mut v = vec![0.0; n];
            for (m, (gk, b)) in eigen.modes().iter().zip(gammas.iter().zip(&brownian)) {
                let c = gk * b[step];
                if c != 0.0 {
                    for (vj, ej) in v.iter_mut().zip(m.vector.values()) {
                        *vj += c * ej;
                    }
                }
            }
            Field::new(*grid, v)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(NoisePath {
        spec: spec.clone(),
        grid: *grid,
        values,
        brownian,
    })
}

/// A zero forcing on the given time grid (deterministic equation).
pub fn zero_path(grid: &GridSpec, t_final: f64, n_steps: usize) -> Result<NoisePath, NoiseError> {
    let spec = NoiseSpec {
        k_max: 1,
        gamma_rule: GammaRule::Explicit { values: vec![0.0] },
        seed: 0,
        t_final,
        n_steps,
    };
    let eigen = grid::eigensystem(grid, 1)?;
    synthesize_unchecked(&spec, grid, &eigen)
}

/// `max_n |√Q W(t_n)|_∞`
pub fn sup_norm_estimate(path: &NoisePath) -> f64 {
    path.values.iter().map(grid::norm_linf).fold(0.0, f64::max)
}

/// Greedy partition of the time grid into cells on which the sup-norm
/// oscillation of `√Q W` stays below `alpha`.
///
/// Returns the partition points as step indices, starting at 0 and ending at
/// `n_steps`; consecutive cells share their endpoint.
pub fn modulus_of_continuity(path: &NoisePath, alpha: f64) -> Result<Vec<usize>, NoiseError> {
    if !(alpha > 0.0) {
        return Err(NoiseError::InvalidGamma(format!("alpha must be positive, got {alpha}")));
    }
    let n_steps = path.n_steps();
    if path.spec.gamma_rule.is_zero(path.spec.k_max) {
        return Ok(vec![0, n_steps]);
    }
    let mut points = vec![0];
    let mut start = 0;
    let mut lo: Vec<f64> = path.values[0].values().to_vec();
    let mut hi = lo.clone();
    let mut i = 1;
    while i <= n_steps {
        let v = path.values[i].values();
        let osc = lo
            .iter()
            .zip(&hi)
            .zip(v)
            .map(|((&l, &h), &x)| h.max(x) - l.min(x))
            .fold(0.0, f64::max);
        if osc < alpha {
            for ((l, h), &x) in lo.iter_mut().zip(hi.iter_mut()).zip(v) {
                *l = l.min(x);
                *h = h.max(x);
            }
            i += 1;
            continue;
        }
        if i - 1 == start {
            return Err(NoiseError::StepTooCoarse {
                step: start,
                oscillation: osc,
                alpha,
            });
        }
        // Close the cell at i-1 and restart from there.
        start = i - 1;
        points.push(start);
        lo = path.values[start].values().to_vec();
        hi = lo.clone();
    }
    if *points.last().unwrap() != n_steps {
        points.push(n_steps);
    }
    Ok(points)
}

/// Largest sup-norm oscillation of `√Q W` inside `[t_a, t_b]`.
pub fn cell_oscillation(path: &NoisePath, a: usize, b: usize) -> f64 {
    let n = path.grid.n_interior();
    (0..n)
        .map(|j| {
            let (lo, hi) = path.values[a..=b]
                .iter()
                .map(|f| f.values()[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            hi - lo
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize, k_max: usize, rule: GammaRule, seed: u64) -> (GridSpec, EigenSystem, NoiseSpec) {
        let g = GridSpec::new(1.0, n).unwrap();
        let e = grid::eigensystem(&g, k_max).unwrap();
        let spec = NoiseSpec {
            k_max,
            gamma_rule: rule,
            seed,
            t_final: 1.0,
            n_steps: 200,
        };
        (g, e, spec)
    }

    fn power(r: f64) -> GammaRule {
        GammaRule::PowerLaw {
            gamma0: 1.0,
            exponent: r,
        }
    }

    #[test]
    fn h1_margins() {
        let (_, e, spec) = setup(31, 8, power(8.0), 1);
        let rep = validate_h1(&spec, &e).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.margin_quadratic, Some(11.0));
        assert_eq!(rep.margin_cubic, Some(1.0));
        assert!(rep.sum_quadratic.is_finite() && rep.sum_cubic.is_finite());

        let (_, e, spec) = setup(31, 8, power(4.0), 1);
        let rep = validate_h1(&spec, &e).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.margin_cubic, Some(-3.0));
        assert!(rep.margin_quadratic.unwrap() > 0.0);

        let (_, e, spec) = setup(31, 8, GammaRule::Explicit { values: vec![0.0; 8] }, 1);
        assert!(validate_h1(&spec, &e).unwrap().passed);
    }

    #[test]
    fn h1_rejects_bad_rules() {
        let bad = GammaRule::PowerLaw {
            gamma0: -1.0,
            exponent: 8.0,
        };
        let (_, e, spec) = setup(31, 8, bad, 1);
        assert!(matches!(validate_h1(&spec, &e), Err(NoiseError::InvalidGamma(_))));
        let bad = GammaRule::PowerLaw {
            gamma0: 1.0,
            exponent: f64::NAN,
        };
        let (_, e, spec) = setup(31, 8, bad, 1);
        assert!(validate_h1(&spec, &e).is_err());
    }

    #[test]
    fn synthesize_rejects_failing_h1_and_too_many_modes() {
        let (g, e, spec) = setup(31, 8, power(4.0), 1);
        assert!(matches!(synthesize(&spec, &g, &e), Err(NoiseError::H1Violated { .. })));
        assert!(synthesize_unchecked(&spec, &g, &e).is_ok());
        let g = GridSpec::new(1.0, 4).unwrap();
        let e = grid::eigensystem(&g, 4).unwrap();
        let spec = NoiseSpec { k_max: 5, ..spec };
        assert!(matches!(
            synthesize_unchecked(&spec, &g, &e),
            Err(NoiseError::TooManyModes { .. })
        ));
    }

    #[test]
    fn zero_noise_is_zero() {
        let (g, e, spec) = setup(15, 4, GammaRule::Explicit { values: vec![0.0; 4] }, 3);
        let p = synthesize(&spec, &g, &e).unwrap();
        assert!(p.values().iter().all(|f| f.values().iter().all(|&v| v == 0.0)));
        assert_eq!(sup_norm_estimate(&p), 0.0);
        assert_eq!(modulus_of_continuity(&p, 1e-3).unwrap(), vec![0, 200]);
    }

    #[test]
    fn single_mode_structure() {
        let (g, e, spec) = setup(15, 1, GammaRule::Explicit { values: vec![0.7] }, 9);
        let p = synthesize(&spec, &g, &e).unwrap();
        let e1 = &e.modes()[0].vector;
        let mut expect_sup: f64 = 0.0;
        for (n, f) in p.values().iter().enumerate() {
            let b = p.brownian()[0][n];
            assert!((grid::norm_l2(f) - 0.7 * b.abs()).abs() < 1e-12);
            expect_sup = expect_sup.max(0.7 * b.abs() * grid::norm_linf(e1));
        }
        assert!((sup_norm_estimate(&p) - expect_sup).abs() < 1e-12);
        assert_eq!(p.brownian()[0][0], 0.0);
    }

    #[test]
    fn adding_modes_keeps_lower_modes() {
        let (g, e, spec) = setup(15, 3, power(8.0), 5);
        let a = synthesize(&spec, &g, &e).unwrap();
        let e6 = grid::eigensystem(&g, 6).unwrap();
        let b = synthesize(&NoiseSpec { k_max: 6, ..spec }, &g, &e6).unwrap();
        assert_eq!(a.brownian()[..3], b.brownian()[..3]);
    }

    #[test]
    fn restriction_subsamples() {
        let (g, e, spec) = setup(15, 3, power(8.0), 5);
        let p = synthesize(&spec, &g, &e).unwrap();
        let q = p.restrict(4).unwrap();
        assert_eq!(q.n_steps(), 50);
        assert_eq!(q.values()[10], p.values()[40]);
        assert!((q.dt() - 4.0 * p.dt()).abs() < 1e-15);
        assert!(p.restrict(3).is_err());
        assert!(p.restrict(0).is_err());
    }

    #[test]
    fn modulus_partition_respects_alpha() {
        let (g, e, spec) = setup(15, 4, power(8.0), 11);
        let p = synthesize(&spec, &g, &e).unwrap();
        assert_eq!(modulus_of_continuity(&p, f64::INFINITY).unwrap(), vec![0, 200]);
        let pts = modulus_of_continuity(&p, 0.6).unwrap();
        assert!(pts.len() > 2);
        assert_eq!(pts[0], 0);
        assert_eq!(*pts.last().unwrap(), 200);
        for w in pts.windows(2) {
            assert!(w[0] < w[1]);
            assert!(cell_oscillation(&p, w[0], w[1]) < 0.6);
        }
        assert!(matches!(
            modulus_of_continuity(&p, 1e-9),
            Err(NoiseError::StepTooCoarse { step: 0, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let (g, e, spec) = setup(7, 3, power(8.0), 21);
        let spec = NoiseSpec { n_steps: 10, ..spec };
        let p = synthesize(&spec, &g, &e).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("step,time,node,value\n"));
        let q = NoisePath::read_csv(buf.as_slice(), &spec, &g).unwrap();
        assert_eq!(q.values(), p.values());
        for (a, b) in p.brownian().iter().zip(q.brownian()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
        assert!(NoisePath::read_csv(&b"step,time,node,value\n0,0,1,0\n"[..], &spec, &g).is_err());
    }
}
