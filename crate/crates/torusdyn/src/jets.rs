//! Truncated Taylor arithmetic used for exact derivatives of composite
//! scalar fields: univariate jets of order 4 (`Taylor5`) and bivariate jets
//! of total degree 4 (`Jet2`). Both implement [`Scalar`], so every field in
//! this crate is written once, generically, and evaluated either on plain
//! `f64` or on jets to read off derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic shared by `f64` and the jet types. Analytic primitives are
/// provided through `apply_series`, which composes the truncated Taylor
/// expansion of a univariate function around the 0th-order value.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(c: f64) -> Self;

    /// 0th-order (point) value.
    fn value(self) -> f64;

    /// Compose with a univariate analytic function given its Taylor
    /// coefficients at `self.value()`: `coeffs[k] = f^(k)(v)/k!`.
    fn apply_series(self, coeffs: &[f64; 5]) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn scale(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }

    fn sin(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.apply_series(&[s, c, -s / 2.0, -c / 6.0, s / 24.0])
    }

    fn cos(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.apply_series(&[c, -s, -c / 2.0, s / 6.0, c / 24.0])
    }

    fn exp(self) -> Self {
        let e = self.value().exp();
        self.apply_series(&[e, e, e / 2.0, e / 6.0, e / 24.0])
    }

    /// Reciprocal; the point value must be nonzero.
    fn recip(self) -> Self {
        let v = self.value();
        let r = 1.0 / v;
        self.apply_series(&[r, -r * r, r * r * r, -r * r * r * r, r * r * r * r * r])
    }

    /// Square root; the point value must be positive.
    fn sqrt(self) -> Self {
        let s = self.value().sqrt();
        let r = 1.0 / s;
        self.apply_series(&[
            s,
            0.5 * r,
            -0.125 * r / s / s,
            0.0625 * r / s.powi(4),
            -0.0390625 * r / s.powi(6),
        ])
    }
}

impl Scalar for f64 {
    fn from_f64(c: f64) -> Self {
        c
    }

    fn value(self) -> f64 {
        self
    }

    fn apply_series(self, coeffs: &[f64; 5]) -> Self {
        coeffs[0]
    }
}

/// Univariate jet: coefficients of 1, τ, τ², τ³, τ⁴.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Taylor5(pub [f64; 5]);

impl Taylor5 {
    pub fn constant(c: f64) -> Self {
        Taylor5([c, 0.0, 0.0, 0.0, 0.0])
    }

    /// The identity jet v + τ.
    pub fn variable(v: f64) -> Self {
        Taylor5([v, 1.0, 0.0, 0.0, 0.0])
    }

    /// k-th derivative at the expansion point (k ≤ 4).
    pub fn deriv(&self, k: usize) -> f64 {
        const FACT: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];
        self.0[k] * FACT[k]
    }
}

impl Add for Taylor5 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a += b;
        }
        Taylor5(c)
    }
}

impl Sub for Taylor5 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a -= b;
        }
        Taylor5(c)
    }
}

impl Neg for Taylor5 {
    type Output = Self;
    fn neg(self) -> Self {
        Taylor5(self.0.map(|a| -a))
    }
}

impl Mul for Taylor5 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut c = [0.0; 5];
        for i in 0..5 {
            for j in 0..5 - i {
                c[i + j] += self.0[i] * rhs.0[j];
            }
        }
        Taylor5(c)
    }
}

impl Div for Taylor5 {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl Scalar for Taylor5 {
    fn from_f64(c: f64) -> Self {
        Taylor5::constant(c)
    }

    fn value(self) -> f64 {
        self.0[0]
    }

    fn apply_series(self, coeffs: &[f64; 5]) -> Self {
        // Horner in the nilpotent part n = self − value.
        let mut n = self;
        n.0[0] = 0.0;
        let mut acc = Taylor5::constant(coeffs[4]);
        for k in (0..4).rev() {
            acc = acc * n + Taylor5::constant(coeffs[k]);
        }
        acc
    }
}

/// Number of monomials x^i y^j with i + j ≤ 4.
pub const JET2_LEN: usize = 15;

#[inline]
fn j2idx(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

/// Bivariate jet of total degree ≤ 4. Coefficient at index (i, j) is the
/// Taylor coefficient ∂₁^i ∂₂^j f / (i! j!).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2(pub [f64; JET2_LEN]);

impl Jet2 {
    pub fn constant(c: f64) -> Self {
        let mut a = [0.0; JET2_LEN];
        a[0] = c;
        Jet2(a)
    }

    /// Jet of the first coordinate function at value v.
    pub fn var1(v: f64) -> Self {
        let mut a = [0.0; JET2_LEN];
        a[0] = v;
        a[j2idx(1, 0)] = 1.0;
        Jet2(a)
    }

    /// Jet of the second coordinate function at value v.
    pub fn var2(v: f64) -> Self {
        let mut a = [0.0; JET2_LEN];
        a[0] = v;
        a[j2idx(0, 1)] = 1.0;
        Jet2(a)
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.0[j2idx(i, j)]
    }

    /// Partial derivative ∂₁^i ∂₂^j f at the expansion point.
    pub fn deriv(&self, i: usize, j: usize) -> f64 {
        const FACT: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];
        self.coeff(i, j) * FACT[i] * FACT[j]
    }

    pub fn gradient(&self) -> [f64; 2] {
        [self.deriv(1, 0), self.deriv(0, 1)]
    }

    pub fn hessian(&self) -> [[f64; 2]; 2] {
        let h11 = self.deriv(2, 0);
        let h12 = self.deriv(1, 1);
        let h22 = self.deriv(0, 2);
        [[h11, h12], [h12, h22]]
    }
}

impl Add for Jet2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a += b;
        }
        Jet2(c)
    }
}

impl Sub for Jet2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a -= b;
        }
        Jet2(c)
    }
}

impl Neg for Jet2 {
    type Output = Self;
    fn neg(self) -> Self {
        Jet2(self.0.map(|a| -a))
    }
}

impl Mul for Jet2 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut c = [0.0; JET2_LEN];
        for i1 in 0..=4 {
            for j1 in 0..=4 - i1 {
                let a = self.0[j2idx(i1, j1)];
                if a == 0.0 {
                    continue;
                }
                for i2 in 0..=4 - i1 - j1 {
                    for j2 in 0..=4 - i1 - j1 - i2 {
                        c[j2idx(i1 + i2, j1 + j2)] += a * rhs.0[j2idx(i2, j2)];
                    }
                }
            }
        }
        Jet2(c)
    }
}

impl Div for Jet2 {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl Scalar for Jet2 {
    fn from_f64(c: f64) -> Self {
        Jet2::constant(c)
    }

    fn value(self) -> f64 {
        self.0[0]
    }

    fn apply_series(self, coeffs: &[f64; 5]) -> Self {
        let mut n = self;
        n.0[0] = 0.0;
        let mut acc = Jet2::constant(coeffs[4]);
        for k in (0..4).rev() {
            acc = acc * n + Jet2::constant(coeffs[k]);
        }
        acc
    }
}

/// Evaluate Σ coeffs[k]·x^k by Horner's rule in any scalar.
pub fn poly_eval<S: Scalar>(coeffs: &[f64], x: S) -> S {
    let mut acc = S::zero();
    for &c in coeffs.iter().rev() {
        acc = acc * x + S::from_f64(c);
    }
    acc
}

/// Compose a univariate profile (defined on jets) onto any scalar argument:
/// expands the profile around `u.value()` and substitutes the nilpotent part.
pub fn compose1<S: Scalar>(profile: impl Fn(Taylor5) -> Taylor5, u: S) -> S {
    let series = profile(Taylor5::variable(u.value()));
    u.apply_series(&series.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn taylor5_matches_analytic_derivatives_of_sin() {
        let t = Taylor5::variable(0.3).sin();
        assert_relative_eq!(t.deriv(0), 0.3_f64.sin(), max_relative = 1e-14);
        assert_relative_eq!(t.deriv(1), 0.3_f64.cos(), max_relative = 1e-14);
        assert_relative_eq!(t.deriv(2), -0.3_f64.sin(), max_relative = 1e-13);
        assert_relative_eq!(t.deriv(3), -0.3_f64.cos(), max_relative = 1e-13);
        assert_relative_eq!(t.deriv(4), 0.3_f64.sin(), max_relative = 1e-12);
    }

    #[test]
    fn jet2_product_and_chain_rules() {
        // f(x, y) = exp(x) * sin(x + 2y) at (0.2, -0.4)
        let x = Jet2::var1(0.2);
        let y = Jet2::var2(-0.4);
        let f = x.exp() * (x + y.scale(2.0)).sin();
        let (a, b) = (0.2_f64, -0.4_f64);
        let s = (a + 2.0 * b).sin();
        let c = (a + 2.0 * b).cos();
        let e = a.exp();
        assert_relative_eq!(f.value(), e * s, max_relative = 1e-14);
        assert_relative_eq!(f.deriv(1, 0), e * (s + c), max_relative = 1e-13);
        assert_relative_eq!(f.deriv(0, 1), e * 2.0 * c, max_relative = 1e-13);
        assert_relative_eq!(f.deriv(2, 0), e * (s + 2.0 * c - s), max_relative = 1e-12);
        assert_relative_eq!(f.deriv(1, 1), e * 2.0 * (c - s), max_relative = 1e-12);
        assert_relative_eq!(f.deriv(0, 2), e * (-4.0 * s), max_relative = 1e-12);
    }

    #[test]
    fn jet2_third_order_matches_finite_differences() {
        let f = |a: f64, b: f64| a.exp() * (a + 2.0 * b).sin();
        let (a, b) = (0.2_f64, -0.4_f64);
        let jet = Jet2::var1(a).exp() * (Jet2::var1(a) + Jet2::var2(b).scale(2.0)).sin();
        let h = 1e-3;
        // ∂₁²∂₂ f by central differences in each slot
        let d21 = (f(a + h, b + h) - 2.0 * f(a, b + h) + f(a - h, b + h)
            - (f(a + h, b - h) - 2.0 * f(a, b - h) + f(a - h, b - h)))
            / (2.0 * h * h * h);
        assert_relative_eq!(jet.deriv(2, 1), d21, max_relative = 1e-5);
        let d30 = (f(a + 2.0 * h, b) - 2.0 * f(a + h, b) + 2.0 * f(a - h, b)
            - f(a - 2.0 * h, b))
            / (2.0 * h * h * h);
        assert_relative_eq!(jet.deriv(3, 0), d30, max_relative = 1e-5);
    }

    #[test]
    fn jet2_reciprocal_is_inverse() {
        let x = Jet2::var1(1.7) + Jet2::var2(0.0).scale(0.8);
        let prod = x * x.recip();
        for (k, &c) in prod.0.iter().enumerate() {
            let want = if k == 0 { 1.0 } else { 0.0 };
            assert!((c - want).abs() < 1e-13, "coeff {k} = {c}");
        }
    }

    #[test]
    fn compose1_threads_profiles_through_jets() {
        // plateau-free check: g(u) = exp(-1/u) composed with u(x,y) = 1 + x²+y
        let u = Jet2::var1(0.0) * Jet2::var1(0.0) + Jet2::var2(0.0) + Jet2::constant(1.0);
        let g = compose1(|t| (-t.recip()).exp(), u);
        let f0 = (-1.0_f64).exp();
        assert_relative_eq!(g.value(), f0, max_relative = 1e-14);
        // d/dy exp(-1/u) = exp(-1/u)/u² at u=1 → e⁻¹
        assert_relative_eq!(g.deriv(0, 1), f0, max_relative = 1e-13);
        // d/dx = 0 at x=0 (u depends on x²)
        assert!(g.deriv(1, 0).abs() < 1e-14);
        // d²/dx² = 2·∂u exp(-1/u) = 2e⁻¹
        assert_relative_eq!(g.deriv(2, 0), 2.0 * f0, max_relative = 1e-13);
    }
}
