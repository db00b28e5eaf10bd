//! The logarithmic flux `Ψ(x) = sign(x) ln(|x|+1)` and its Yosida regularization.
//!
//! All functions are scalar and pure. `Ψ` is taken single-valued with `Ψ(0) = 0`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("regularization parameter must be positive and finite, got {0}")]
pub struct InvalidEpsilon(pub f64);

/// Yosida parameter `ε > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RegularizationParam(f64);

impl RegularizationParam {
    pub fn new(epsilon: f64) -> Result<Self, InvalidEpsilon> {
        if epsilon.is_finite() && epsilon > 0.0 {
            Ok(Self(epsilon))
        } else {
            Err(InvalidEpsilon(epsilon))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

pub fn psi(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().ln_1p()
    }
}

/// `Ψ'(x) = 1/(|x|+1)`
pub fn psi_derivative(x: f64) -> f64 {
    1.0 / (x.abs() + 1.0)
}

/// Convex potential `g(x) = (|x|+1) ln(|x|+1) - |x|`, with `g' = Ψ`.
pub fn g(x: f64) -> f64 {
    let a = x.abs();
    if a < 1e-4 {
        // Series a²/2 - a³/6 + a⁴/12 avoids cancellation near the origin.
        let a2 = a * a;
        return a2 * (0.5 - a / 6.0 + a2 / 12.0);
    }
    (a + 1.0) * a.ln_1p() - a
}

const RESOLVENT_MAX_ITER: usize = 100;

/// `J_ε(x) = (1 + εΨ)^{-1}(x)`: the unique `y` with `y + εΨ(y) = x`.
///
/// Newton from `y₀ = |x|` safeguarded by bisection on `[0, |x|]`. The iteration
/// runs to machine precision rather than stopping at the residual tolerance, so
/// that `(x - J)/ε` stays accurate for small `ε`.
pub fn psi_resolvent(eps: RegularizationParam, x: f64) -> f64 {
    let e = eps.get();
    let a = x.abs();
    if a == 0.0 {
        return 0.0;
    }
    let residual = |y: f64| y + e * y.ln_1p() - a;
    let (mut lo, mut hi) = (0.0_f64, a);
    let mut y = a;
    for _ in 0..RESOLVENT_MAX_ITER {
        let r = residual(y);
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            hi = hi.min(y);
        } else {
            lo = lo.max(y);
        }
        let mut next = y - r / (1.0 + e / (1.0 + y));
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 2.0 * f64::EPSILON * y.max(f64::MIN_POSITIVE) || hi - lo <= f64::EPSILON * a {
            y = next;
            break;
        }
        y = next;
    }
    debug_assert!(residual(y).abs() <= 1e-12 * a.max(1.0));
    x.signum() * y
}

/// Yosida approximation `Ψ_ε(x) = Ψ(J_ε x) = (x - J_ε x)/ε`.
///
/// Evaluated through `Ψ(J_ε x)`, which does not lose digits as `ε → 0`.
pub fn psi_yosida(eps: RegularizationParam, x: f64) -> f64 {
    psi(psi_resolvent(eps, x))
}

/// The difference quotient form `(x - J_ε x)/ε` of the Yosida approximation.
pub fn psi_yosida_difference_form(eps: RegularizationParam, x: f64) -> f64 {
    (x - psi_resolvent(eps, x)) / eps.get()
}

/// `Ψ̄_ε(x) = Ψ_ε(x) + εx`
pub fn psi_bar(eps: RegularizationParam, x: f64) -> f64 {
    psi_yosida(eps, x) + eps.get() * x
}

/// Moreau–Yosida envelope `g_ε(x) = (x - J)²/(2ε) + g(J)`, `J = J_ε x`.
///
/// Since `x - J = εΨ(J)` the first term is `εΨ(J)²/2`.
pub fn g_moreau(eps: RegularizationParam, x: f64) -> f64 {
    let j = psi_resolvent(eps, x);
    let p = psi(j);
    0.5 * eps.get() * p * p + g(j)
}

/// `ḡ_ε(x) = g_ε(x) + εx²/2`, the potential of [`psi_bar`].
pub fn g_bar(eps: RegularizationParam, x: f64) -> f64 {
    g_moreau(eps, x) + 0.5 * eps.get() * x * x
}

/// `Ψ_ε'(x) = Ψ'(J)/(1 + εΨ'(J))`, valued in `(0, 1/(1+ε)]`.
pub fn psi_yosida_derivative(eps: RegularizationParam, x: f64) -> f64 {
    let d = psi_derivative(psi_resolvent(eps, x));
    d / (1.0 + eps.get() * d)
}

pub fn psi_bar_derivative(eps: RegularizationParam, x: f64) -> f64 {
    psi_yosida_derivative(eps, x) + eps.get()
}

/// `(Ψ̄_ε(x), Ψ̄_ε'(x))` from a single resolvent evaluation.
pub fn psi_bar_with_derivative(eps: RegularizationParam, x: f64) -> (f64, f64) {
    let e = eps.get();
    let j = psi_resolvent(eps, x);
    let d = psi_derivative(j);
    (psi(j) + e * x, d / (1.0 + e * d) + e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn eps(e: f64) -> RegularizationParam {
        RegularizationParam::new(e).unwrap()
    }

    #[test]
    fn epsilon_must_be_positive() {
        assert!(RegularizationParam::new(0.0).is_err());
        assert!(RegularizationParam::new(-1.0).is_err());
        assert!(RegularizationParam::new(f64::NAN).is_err());
        assert_eq!(eps(0.5).get(), 0.5);
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(0.0), 0.0);
        assert_eq!(psi(-0.0), 0.0);
        assert!((psi(E - 1.0) - 1.0).abs() < 1e-15);
        assert!((psi(-(E * E - 1.0)) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn g_values() {
        assert_eq!(g(0.0), 0.0);
        assert!((g(E - 1.0) - 1.0).abs() < 1e-15);
        for x in [-30.0, -1.0, -1e-5, 1e-6, 0.3, 2.0, 1e3] {
            let v = g(x);
            assert!(v >= 0.0 && v <= x * x, "x={x}");
            assert_eq!(v, g(-x));
        }
        // Series branch matches the closed form at the switch point.
        let a = 1e-4;
        let closed = (a + 1.0) * f64::ln_1p(a) - a;
        assert!((g(a) - closed).abs() < 1e-17);
    }

    #[test]
    fn g_superlinear() {
        let r: Vec<f64> = [1e2, 1e4, 1e6].iter().map(|&x| g(x) / x).collect();
        assert!(r[0] < r[1] && r[1] < r[2]);
    }

    #[test]
    fn resolvent_examples() {
        assert_eq!(psi_resolvent(eps(1.0), 0.0), 0.0);
        assert!((psi_resolvent(eps(1.0), E) - (E - 1.0)).abs() < 1e-15);
        assert!((psi_resolvent(eps(1.0), -E) + (E - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn resolvent_matches_bisection_oracle() {
        let (e, x) = (0.5, 10.0);
        let f = |y: f64| y + e * f64::ln_1p(y) - x;
        let (mut lo, mut hi) = (0.0, x);
        while hi - lo > 1e-14 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        let y = psi_resolvent(eps(e), x);
        assert!(y > 0.0 && y < 10.0);
        assert!((y - 0.5 * (lo + hi)).abs() < 1e-13);
        assert!(f(y).abs() < 1e-12);
    }

    #[test]
    fn resolvent_at_extremes() {
        for &x in &[1e-300, 1e-12, 1e8, 1e15, -1e15] {
            for &e in &[1e-6, 1e-2, 1.0, 1e3] {
                let y = psi_resolvent(eps(e), x);
                let r = y + e * psi(y) - x;
                assert!(r.abs() <= 1e-12 * x.abs().max(1.0), "x={x} e={e} r={r}");
                assert!(y.abs() <= x.abs());
                assert_eq!(y.signum(), x.signum());
            }
        }
    }

    #[test]
    fn yosida_examples() {
        assert_eq!(psi_yosida(eps(1.0), 0.0), 0.0);
        assert!((psi_yosida(eps(1.0), E) - 1.0).abs() < 1e-15);
        assert!((psi_yosida_difference_form(eps(1.0), E) - 1.0).abs() < 1e-15);
        assert!((psi_bar(eps(1.0), E) - (1.0 + E)).abs() < 1e-14);
        assert_eq!(psi_bar(eps(0.1), 0.0), 0.0);
        assert_eq!(g_bar(eps(0.1), 0.0), 0.0);
    }

    #[test]
    fn moreau_example_and_minimization_oracle() {
        assert_eq!(g_moreau(eps(1.0), 0.0), 0.0);
        assert!((g_moreau(eps(1.0), E) - 1.5).abs() < 1e-14);
        // Golden-section minimisation of y ↦ (x-y)²/(2ε) + g(y) on [0, x].
        for &(e, x) in &[(1.0, E), (0.2, 3.7), (0.01, 12.0), (2.0, 0.4)] {
            let obj = |y: f64| (x - y) * (x - y) / (2.0 * e) + g(y);
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            let (mut a, mut b) = (0.0, x);
            for _ in 0..200 {
                let c = b - phi * (b - a);
                let d = a + phi * (b - a);
                if obj(c) < obj(d) {
                    b = d
                } else {
                    a = c
                }
            }
            let min = obj(0.5 * (a + b));
            assert!((g_moreau(eps(e), x) - min).abs() < 1e-12 * min.max(1.0), "e={e} x={x}");
        }
    }

    #[test]
    fn derivative_examples() {
        assert!((psi_yosida_derivative(eps(0.3), 0.0) - 1.0 / 1.3).abs() < 1e-15);
        assert!((psi_yosida_derivative(eps(1.0), E) - 1.0 / (E + 1.0)).abs() < 1e-15);
        let h = 1e-6;
        let fd = (psi_yosida(eps(1.0), E + h) - psi_yosida(eps(1.0), E - h)) / (2.0 * h);
        assert!((fd - 1.0 / (E + 1.0)).abs() < 1e-8);
        assert!(psi_yosida_derivative(eps(0.1), 1e8) < 1e-6);
        assert!(psi_yosida_derivative(eps(0.1), -1e8) < 1e-6);
    }

    #[test]
    fn fused_evaluation_matches_separate_calls() {
        for x in [-7.0, -0.2, 0.0, 0.9, 33.0] {
            let (f, d) = psi_bar_with_derivative(eps(0.03), x);
            assert_eq!(f, psi_bar(eps(0.03), x));
            assert_eq!(d, psi_bar_derivative(eps(0.03), x));
        }
    }

    #[test]
    fn yosida_converges_monotonically_in_epsilon() {
        for x in [-20.0, -3.0, -0.5, 0.01, 0.7, 4.0, 50.0] {
            let errs: Vec<f64> = [1.0, 0.1, 0.01, 0.001]
                .iter()
                .map(|&e| (psi_yosida(eps(e), x) - psi(x)).abs())
                .collect();
            assert!(errs.windows(2).all(|w| w[1] < w[0]), "x={x} {errs:?}");
        }
    }
}
