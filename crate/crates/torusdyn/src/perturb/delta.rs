//! Mollified Dirac pulses: the standard bump ψ(u) = c·e^{−1/(1−u²)} scaled
//! to a width ε around a center time. The bump is generic over jet scalars
//! so pulses can sit inside chart compositions, and a hand-rolled
//! Gauss–Legendre rule backs the moment checks.

use crate::error::{Result, TorusDynError};
use crate::jets::{Scalar, Taylor5};

/// 1 / ∫₋₁¹ e^{−1/(1−u²)} du, so that [`bump`] has unit mass.
pub const BUMP_NORMALIZATION: f64 = 2.252_283_621_043_581;

/// ψ(u) = c·e^{−1/(1−u²)} on (−1, 1), identically zero outside. C^∞ with
/// all derivatives vanishing at u = ±1, so the zero extension is exact for
/// jets too.
pub fn bump<S: Scalar>(u: S) -> S {
    let u0 = u.value();
    // past this the exponential underflows anyway; returning the zero jet
    // avoids overflow in the reciprocal's high-order coefficients
    if u0 * u0 >= 1.0 - 1e-8 {
        return S::zero();
    }
    let d = S::one() - u * u;
    d.recip().scale(-1.0).exp().scale(BUMP_NORMALIZATION)
}

/// δ_{t₁,ε}(t) = ψ((t − t₁)/ε)/ε: unit mass, support [t₁ − ε, t₁ + ε].
#[derive(Clone, Copy, Debug)]
pub struct MollifiedDelta {
    pub center: f64,
    pub width: f64,
}

impl MollifiedDelta {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() || !center.is_finite() {
            return Err(TorusDynError::invalid(format!(
                "mollifier width {width} must be positive and finite"
            )));
        }
        Ok(MollifiedDelta { center, width })
    }

    /// Evaluate on any jet scalar (plain f64 included).
    pub fn eval<S: Scalar>(&self, t: S) -> S {
        let u = (t - S::from_f64(self.center)).scale(1.0 / self.width);
        bump(u).scale(1.0 / self.width)
    }

    /// k-th derivative at time t for k ≤ 4, from the Taylor jet.
    pub fn deriv(&self, t: f64, k: usize) -> f64 {
        self.eval(Taylor5::variable(t)).deriv(k)
    }

    /// Support interval [t₁ − ε, t₁ + ε].
    pub fn support(&self) -> (f64, f64) {
        (self.center - self.width, self.center + self.width)
    }
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [−1, 1],
/// via Newton iteration on the Legendre three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Composite 64-point Gauss–Legendre quadrature of f over [a, b].
pub fn integrate_gl(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(64);
    let mut total = 0.0;
    let h = (b - a) / panels.max(1) as f64;
    for p in 0..panels.max(1) {
        let (lo, hi) = (a + h * p as f64, a + h * (p + 1) as f64);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for (x, w) in nodes.iter().zip(&weights) {
            total += half * w * f(mid + half * x);
        }
    }
    total
}
