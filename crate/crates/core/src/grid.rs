//! Uniform Dirichlet grid on `(0, L)`.
//!
//! Nodal fields live on the interior nodes `ξ_j = j·h`, `j = 1..=n`, with the
//! boundary values implicitly zero. All integrals use the rectangle rule with
//! weight `h` at the interior nodes, which is the quadrature under which the
//! sine vectors of the three-point stencil are exactly orthonormal.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("interval length must be positive and finite, got {0}")]
    InvalidLength(f64),
    #[error("need at least 2 interior nodes, got {0}")]
    TooFewNodes(usize),
    #[error("field contains a non-finite value at node {0}")]
    NonFinite(usize),
    #[error("field has {got} values but the grid has {expected} interior nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("mode count {k_max} outside 1..={n_interior}")]
    ModeOutOfRange { k_max: usize, n_interior: usize },
    #[error("resolvent parameter must be positive, got {0}")]
    InvalidMu(f64),
    #[error("Lp exponent must be >= 1, got {0}")]
    InvalidExponent(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    length: f64,
    n_interior: usize,
}

impl GridSpec {
    pub fn new(length: f64, n_interior: usize) -> Result<Self, GridError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(GridError::InvalidLength(length));
        }
        if n_interior < 2 {
            return Err(GridError::TooFewNodes(n_interior));
        }
        Ok(Self { length, n_interior })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    /// Mesh width `L / (n + 1)`.
    pub fn h(&self) -> f64 {
        self.length / (self.n_interior as f64 + 1.0)
    }

    /// Coordinates of the interior nodes.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.h();
        (1..=self.n_interior).map(move |j| j as f64 * h)
    }

    /// Discrete Dirichlet eigenvalue `(4/h²) sin²(kπh/(2L))`.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let h = self.h();
        let s = (k as f64 * PI * h / (2.0 * self.length)).sin();
        4.0 / (h * h) * s * s
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Result<Field, GridError> {
        Field::new(*self, self.nodes().map(f).collect())
    }

    pub fn zeros(&self) -> Field {
        Field {
            grid: *self,
            values: vec![0.0; self.n_interior],
        }
    }

    pub fn constant(&self, c: f64) -> Result<Field, GridError> {
        Field::new(*self, vec![c; self.n_interior])
    }
}

/// Nodal values on the interior of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.n_interior {
            return Err(GridError::LengthMismatch {
                expected: grid.n_interior,
                got: values.len(),
            });
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(j));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field, GridError> {
        self.check_grid(other)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field, GridError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field, GridError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    /// `self + c·other`
    pub fn axpy(&self, c: f64, other: &Field) -> Result<Field, GridError> {
        self.zip_with(other, |a, b| a + c * b)
    }

    fn check_grid(&self, other: &Field) -> Result<(), GridError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }

    fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(j) => Err(GridError::NonFinite(j)),
            None => Ok(()),
        }
    }
}

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `lower[j]` couples row `j` to column `j-1` (ignored for `j = 0`), `upper[j]`
/// couples row `j` to `j+1` (ignored for the last row). The matrices this crate
/// produces are diagonally dominant, so no pivoting is needed.
pub(crate) fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for j in 1..n {
        denom = diag[j] - lower[j] * c[j - 1];
        c[j] = upper[j] / denom;
        d[j] = (rhs[j] - lower[j] * d[j - 1]) / denom;
    }
    let mut x = d;
    for j in (0..n - 1).rev() {
        x[j] -= c[j] * x[j + 1];
    }
    x
}

/// Symmetric constant-coefficient three-band solve: `diag` on the diagonal,
/// `off` on both off-diagonals.
fn solve_constant_band(diag: f64, off: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    solve_tridiagonal(&vec![off; n], &vec![diag; n], &vec![off; n], rhs)
}

/// Three-point Dirichlet Laplacian `(f_{j-1} - 2f_j + f_{j+1}) / h²`.
pub fn laplacian_apply(f: &Field) -> Result<Field, GridError> {
    f.check_finite()?;
    Ok(Field {
        grid: f.grid,
        values: laplacian_raw(f.grid.h(), &f.values),
    })
}

pub(crate) fn laplacian_raw(h: f64, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let inv_h2 = 1.0 / (h * h);
    (0..n)
        .map(|j| {
            let left = if j > 0 { v[j - 1] } else { 0.0 };
            let right = if j + 1 < n { v[j + 1] } else { 0.0 };
            (left - 2.0 * v[j] + right) * inv_h2
        })
        .collect()
}

/// Solves `-Δ_h u = f` by a direct three-band solve.
pub fn neg_laplacian_inverse(f: &Field) -> Result<Field, GridError> {
    f.check_finite()?;
    let h2 = f.grid.h().powi(2);
    let rhs: Vec<f64> = f.values.iter().map(|v| v * h2).collect();
    Ok(Field {
        grid: f.grid,
        values: solve_constant_band(2.0, -1.0, &rhs),
    })
}

/// `J_μ f = (I - μΔ_h)^{-1} f`.
pub fn laplacian_resolvent(mu: f64, f: &Field) -> Result<Field, GridError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(GridError::InvalidMu(mu));
    }
    f.check_finite()?;
    let r = mu / f.grid.h().powi(2);
    Ok(Field {
        grid: f.grid,
        values: solve_constant_band(1.0 + 2.0 * r, -r, &f.values),
    })
}

#[derive(Debug, Clone)]
pub struct Mode {
    pub index: usize,
    pub eigenvalue: f64,
    pub vector: Field,
}

/// Closed-form eigenpairs of `-Δ_h` on a grid.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    grid: GridSpec,
    modes: Vec<Mode>,
}

impl EigenSystem {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Mode `k` (1-based).
    pub fn mode(&self, k: usize) -> Option<&Mode> {
        k.checked_sub(1).and_then(|i| self.modes.get(i))
    }
}

/// Discrete sine eigenpairs `e_k(j) = √(2/L) sin(kπjh/L)`, `k = 1..=k_max`.
pub fn eigensystem(grid: &GridSpec, k_max: usize) -> Result<EigenSystem, GridError> {
    if k_max == 0 || k_max > grid.n_interior {
        return Err(GridError::ModeOutOfRange {
            k_max,
            n_interior: grid.n_interior,
        });
    }
    let amp = (2.0 / grid.length).sqrt();
    let modes = (1..=k_max)
        .map(|k| {
            let values = (1..=grid.n_interior)
                .map(|j| amp * (k as f64 * PI * j as f64 / (grid.n_interior as f64 + 1.0)).sin())
                .collect();
            Mode {
                index: k,
                eigenvalue: grid.eigenvalue(k),
                vector: Field { grid: *grid, values },
            }
        })
        .collect();
    Ok(EigenSystem { grid: *grid, modes })
}

/// `(f, g)₂ = h Σ f_j g_j`
pub fn inner_l2(f: &Field, g: &Field) -> Result<f64, GridError> {
    f.check_grid(g)?;
    Ok(f.grid.h() * dot(&f.values, &g.values))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_l2(f: &Field) -> f64 {
    (f.grid.h() * dot(&f.values, &f.values)).sqrt()
}

pub fn norm_lp(f: &Field, p: f64) -> Result<f64, GridError> {
    if !(p >= 1.0) {
        return Err(GridError::InvalidExponent(p));
    }
    if p.is_infinite() {
        return Ok(norm_linf(f));
    }
    let s: f64 = f.values.iter().map(|v| v.abs().powf(p)).sum();
    Ok((f.grid.h() * s).powf(1.0 / p))
}

pub fn norm_linf(f: &Field) -> f64 {
    f.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `⟨f, g⟩₋₁ = ((-Δ_h)^{-1} f, g)₂`
pub fn inner_hminus1(f: &Field, g: &Field) -> Result<f64, GridError> {
    f.check_grid(g)?;
    inner_l2(&neg_laplacian_inverse(f)?, g)
}

pub fn norm_hminus1(f: &Field) -> Result<f64, GridError> {
    // Clamp: the pairing is positive definite, rounding can only produce -0-ish values.
    Ok(inner_hminus1(f, f)?.max(0.0).sqrt())
}
