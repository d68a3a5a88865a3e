//! Mechanical Hamiltonians H(x, p) = ½ pᵀ G⁻¹(x) p + U(x) on T² × R².
//! The metric inverse and base potential are trigonometric polynomials;
//! additional potential terms plug in through [`PotentialField`] so that
//! synthesized perturbations participate in every derivative computation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TorusDynError};
use crate::geom::{PhasePoint, TangentPoint, TorusPoint, TAU};
use crate::jets::{Jet2, Scalar};

/// One term a·cos(k1 x1 + k2 x2 + φ) of a trigonometric polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub k1: i32,
    pub k2: i32,
    pub phase: f64,
}

impl TrigTerm {
    pub fn cos(amplitude: f64, k1: i32, k2: i32) -> Self {
        TrigTerm {
            amplitude,
            k1,
            k2,
            phase: 0.0,
        }
    }

    pub fn sin(amplitude: f64, k1: i32, k2: i32) -> Self {
        TrigTerm {
            amplitude,
            k1,
            k2,
            phase: -std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Real trigonometric polynomial c + Σ aₘ cos(kₘ·x + φₘ) on the torus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub constant: f64,
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        TrigPoly {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn new(constant: f64, terms: Vec<TrigTerm>) -> Self {
        TrigPoly { constant, terms }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    pub fn eval(&self, x: TorusPoint) -> f64 {
        let mut v = self.constant;
        for t in &self.terms {
            v += t.amplitude * (t.k1 as f64 * x.x1 + t.k2 as f64 * x.x2 + t.phase).cos();
        }
        v
    }

    /// Taylor jet at x up to total order `order` (≤ 4). Each ∂/∂xᵢ of a
    /// term multiplies by kᵢ and advances the phase by π/2.
    pub fn jet(&self, x: TorusPoint, order: u8) -> Jet2 {
        const INV_FACT: [f64; 5] = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        let order = order.min(4) as usize;
        let mut out = Jet2::constant(self.constant);
        for t in &self.terms {
            let theta = t.k1 as f64 * x.x1 + t.k2 as f64 * x.x2 + t.phase;
            let (k1, k2) = (t.k1 as f64, t.k2 as f64);
            let mut p1 = 1.0;
            for i in 0..=order {
                let mut p2 = 1.0;
                for j in 0..=order - i {
                    let rot = (theta + (i + j) as f64 * std::f64::consts::FRAC_PI_2).cos();
                    out.0[jet_index(i, j)] +=
                        t.amplitude * p1 * p2 * rot * INV_FACT[i] * INV_FACT[j];
                    p2 *= k2;
                }
                p1 *= k1;
            }
        }
        out
    }
}

#[inline]
fn jet_index(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

/// Where a potential term lives on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Support {
    /// Defined everywhere.
    Global,
    /// Contained in the torus ball of the given radius about the center.
    Ball { center: TorusPoint, radius: f64 },
}

impl Support {
    /// Conservative membership test (true may still mean the field is 0).
    pub fn may_contain(&self, x: TorusPoint) -> bool {
        match *self {
            Support::Global => true,
            Support::Ball { center, radius } => x.dist(center) <= radius,
        }
    }

    /// True when two supports are provably disjoint.
    pub fn disjoint_from(&self, other: &Support) -> bool {
        match (*self, *other) {
            (
                Support::Ball {
                    center: c1,
                    radius: r1,
                },
                Support::Ball {
                    center: c2,
                    radius: r2,
                },
            ) => c1.dist(c2) > r1 + r2,
            _ => false,
        }
    }
}

/// Smooth scalar field on the torus exposing point values and Taylor jets.
/// Implementations must make `jet(x, 0..=4)` consistent with `eval`.
pub trait PotentialField: Send + Sync {
    fn eval(&self, x: TorusPoint) -> f64;

    /// Taylor jet of the field at x up to total degree `order` (≤ 4).
    fn jet(&self, x: TorusPoint, order: u8) -> Jet2;

    fn support(&self) -> Support {
        Support::Global
    }

    /// Short human-readable description for reports.
    fn describe(&self) -> String;
}

impl PotentialField for TrigPoly {
    fn eval(&self, x: TorusPoint) -> f64 {
        TrigPoly::eval(self, x)
    }

    fn jet(&self, x: TorusPoint, order: u8) -> Jet2 {
        TrigPoly::jet(self, x, order)
    }

    fn describe(&self) -> String {
        format!("trig({} terms, const {})", self.terms.len(), self.constant)
    }
}

/// A named, scalable potential term added on top of the base potential.
#[derive(Clone)]
pub struct PerturbationTerm {
    pub label: String,
    pub scale: f64,
    field: Arc<dyn PotentialField>,
}

impl PerturbationTerm {
    pub fn new(label: impl Into<String>, field: Arc<dyn PotentialField>) -> Self {
        PerturbationTerm {
            label: label.into(),
            scale: 1.0,
            field,
        }
    }

    pub fn trig(label: impl Into<String>, poly: TrigPoly) -> Self {
        PerturbationTerm::new(label, Arc::new(poly))
    }

    /// Same field, rescaled amplitude.
    pub fn with_scale(&self, scale: f64) -> Self {
        PerturbationTerm {
            scale,
            ..self.clone()
        }
    }

    pub fn support(&self) -> Support {
        self.field.support()
    }

    pub fn eval(&self, x: TorusPoint) -> f64 {
        if !self.field.support().may_contain(x) {
            return 0.0;
        }
        self.scale * self.field.eval(x)
    }

    pub fn jet(&self, x: TorusPoint, order: u8) -> Jet2 {
        if !self.field.support().may_contain(x) {
            return Jet2::constant(0.0);
        }
        let mut j = self.field.jet(x, order);
        for c in j.0.iter_mut() {
            *c *= self.scale;
        }
        j
    }
}

impl fmt::Debug for PerturbationTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbationTerm")
            .field("label", &self.label)
            .field("scale", &self.scale)
            .field("field", &self.field.describe())
            .finish()
    }
}

/// Inverse metric G⁻¹(x) as a symmetric 2×2 matrix of trig polynomials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricInverse {
    pub g11: TrigPoly,
    pub g12: TrigPoly,
    pub g22: TrigPoly,
}

impl MetricInverse {
    pub fn euclidean() -> Self {
        MetricInverse {
            g11: TrigPoly::constant(1.0),
            g12: TrigPoly::constant(0.0),
            g22: TrigPoly::constant(1.0),
        }
    }

    pub fn eval(&self, x: TorusPoint) -> Matrix2<f64> {
        let a = self.g11.eval(x);
        let b = self.g12.eval(x);
        let c = self.g22.eval(x);
        Matrix2::new(a, b, b, c)
    }

    /// Verify positive definiteness on an n×n grid.
    pub fn check_positive_definite(&self, n: usize) -> Result<()> {
        for i in 0..n {
            for j in 0..n {
                let x = TorusPoint::new(TAU * i as f64 / n as f64, TAU * j as f64 / n as f64);
                let g = self.eval(x);
                let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(0, 1)];
                if g[(0, 0)] <= 0.0 || det <= 0.0 {
                    return Err(TorusDynError::invalid(format!(
                        "metric inverse not positive definite near ({:.3}, {:.3}): g11 = {:.3e}, det = {:.3e}",
                        x.x1, x.x2, g[(0, 0)], det
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Convex mechanical system on the 2-torus. Kinetic energy comes from the
/// inverse metric, the potential is the base trig polynomial plus any number
/// of perturbation terms.
#[derive(Clone, Debug)]
pub struct MechanicalSystem {
    pub metric_inv: MetricInverse,
    pub base_potential: TrigPoly,
    pub perturbations: Vec<PerturbationTerm>,
}

/// Value and derivative tensors of H at a phase point.
#[derive(Clone, Debug)]
pub struct HamiltonianDerivatives {
    pub value: f64,
    pub gradient: Vector4<f64>,
    pub hessian: Option<Matrix4<f64>>,
    /// third[k] = ∂ₖ(Hessian); symmetric in all three slots.
    pub third: Option<[Matrix4<f64>; 4]>,
}

impl MechanicalSystem {
    pub fn new(metric_inv: MetricInverse, base_potential: TrigPoly) -> Self {
        MechanicalSystem {
            metric_inv,
            base_potential,
            perturbations: Vec::new(),
        }
    }

    /// Geodesic flow of the flat metric: H = ½|p|².
    pub fn free_particle() -> Self {
        MechanicalSystem::new(MetricInverse::euclidean(), TrigPoly::constant(0.0))
    }

    /// Pendulum in x1 coupled to a free rotor in x2: U = −cos x1.
    pub fn pendulum_rotor() -> Self {
        MechanicalSystem::new(
            MetricInverse::euclidean(),
            TrigPoly::new(0.0, vec![TrigTerm::cos(-1.0, 1, 0)]),
        )
    }

    /// Anisotropic metric with a two-mode potential:
    /// G⁻¹ = diag(1, 1 + ½cos x1), U = −cos x1 − 0.3 cos x2.
    pub fn anisotropic() -> Self {
        MechanicalSystem::new(
            MetricInverse {
                g11: TrigPoly::constant(1.0),
                g12: TrigPoly::constant(0.0),
                g22: TrigPoly::new(1.0, vec![TrigTerm::cos(0.5, 1, 0)]),
            },
            TrigPoly::new(
                0.0,
                vec![TrigTerm::cos(-1.0, 1, 0), TrigTerm::cos(-0.3, 0, 1)],
            ),
        )
    }

    /// Shallow single-mode well U = ω²(1 − cos x1) with ω = 1/5: the orbit
    /// x = (0, t) at energy ½ has a transverse return map conjugate to a
    /// rotation by exactly 2π/5.
    pub fn fifth_turn_rotor() -> Self {
        MechanicalSystem::new(
            MetricInverse::euclidean(),
            TrigPoly::new(0.04, vec![TrigTerm::cos(-0.04, 1, 0)]),
        )
    }

    /// Append a potential term (returns a new system).
    pub fn add_potential(&self, term: PerturbationTerm) -> Self {
        let mut sys = self.clone();
        sys.perturbations.push(term);
        sys
    }

    /// Potential value U(x) including all perturbation terms.
    pub fn potential(&self, x: TorusPoint) -> f64 {
        let mut u = self.base_potential.eval(x);
        for t in &self.perturbations {
            u += t.eval(x);
        }
        u
    }

    /// Taylor jet of the full potential.
    pub fn potential_jet(&self, x: TorusPoint, order: u8) -> Jet2 {
        let mut j = self.base_potential.jet(x, order);
        for t in &self.perturbations {
            j = j + t.jet(x, order);
        }
        j
    }

    pub fn metric_inverse(&self, x: TorusPoint) -> Matrix2<f64> {
        self.metric_inv.eval(x)
    }

    /// G(x) = (G⁻¹)⁻¹, used by the Legendre transform.
    pub fn metric(&self, x: TorusPoint) -> Matrix2<f64> {
        let gi = self.metric_inverse(x);
        gi.try_inverse()
            .expect("metric inverse is positive definite")
    }

    pub fn hamiltonian(&self, z: &PhasePoint) -> f64 {
        let gi = self.metric_inverse(z.x);
        let p = z.momentum();
        0.5 * (p.transpose() * gi * p)[0] + self.potential(z.x)
    }

    /// ∇H in (x1, x2, p1, p2) order.
    pub fn grad(&self, z: &PhasePoint) -> Vector4<f64> {
        let [g11, g12, g22, u] = self.coeff_jets(z.x, 1);
        let (p1, p2) = (z.p1, z.p2);
        let qform = |i: usize, j: usize| {
            0.5 * (g11.deriv(i, j) * p1 * p1
                + 2.0 * g12.deriv(i, j) * p1 * p2
                + g22.deriv(i, j) * p2 * p2)
        };
        Vector4::new(
            qform(1, 0) + u.deriv(1, 0),
            qform(0, 1) + u.deriv(0, 1),
            g11.value() * p1 + g12.value() * p2,
            g12.value() * p1 + g22.value() * p2,
        )
    }

    /// Full 4×4 Hessian of H.
    pub fn hessian(&self, z: &PhasePoint) -> Matrix4<f64> {
        self.derivatives(z, 2).hessian.unwrap()
    }

    /// All derivative tensors up to the requested order (1, 2, or 3).
    pub fn derivatives(&self, z: &PhasePoint, order: u8) -> HamiltonianDerivatives {
        let order = order.clamp(1, 3);
        let [g11, g12, g22, u] = self.coeff_jets(z.x, order);
        let (p1, p2) = (z.p1, z.p2);
        // quadratic form of the (i,j)-th x-derivative of G⁻¹ in p
        let qform = |i: usize, j: usize| {
            0.5 * (g11.deriv(i, j) * p1 * p1
                + 2.0 * g12.deriv(i, j) * p1 * p2
                + g22.deriv(i, j) * p2 * p2)
        };
        // (∂ⁱ∂ʲ G⁻¹) · p
        let gp = |i: usize, j: usize| {
            Vector2::new(
                g11.deriv(i, j) * p1 + g12.deriv(i, j) * p2,
                g12.deriv(i, j) * p1 + g22.deriv(i, j) * p2,
            )
        };
        let gmat = |i: usize, j: usize| {
            Matrix2::new(
                g11.deriv(i, j),
                g12.deriv(i, j),
                g12.deriv(i, j),
                g22.deriv(i, j),
            )
        };

        let value = qform(0, 0) + u.value();
        let gp0 = gp(0, 0);
        let gradient = Vector4::new(
            qform(1, 0) + u.deriv(1, 0),
            qform(0, 1) + u.deriv(0, 1),
            gp0[0],
            gp0[1],
        );

        let hessian = if order >= 2 {
            let mut h = Matrix4::zeros();
            // x-x block
            h[(0, 0)] = qform(2, 0) + u.deriv(2, 0);
            h[(0, 1)] = qform(1, 1) + u.deriv(1, 1);
            h[(1, 1)] = qform(0, 2) + u.deriv(0, 2);
            h[(1, 0)] = h[(0, 1)];
            // x-p block
            let gp10 = gp(1, 0);
            let gp01 = gp(0, 1);
            for i in 0..2 {
                h[(0, 2 + i)] = gp10[i];
                h[(1, 2 + i)] = gp01[i];
                h[(2 + i, 0)] = gp10[i];
                h[(2 + i, 1)] = gp01[i];
            }
            // p-p block
            let g0 = gmat(0, 0);
            for i in 0..2 {
                for j in 0..2 {
                    h[(2 + i, 2 + j)] = g0[(i, j)];
                }
            }
            Some(h)
        } else {
            None
        };

        let third = if order >= 3 {
            let mut t = [Matrix4::zeros(); 4];
            // derivative in x_c of each Hessian block
            for c in 0..2 {
                let dx = |i: usize, j: usize| if c == 0 { (i + 1, j) } else { (i, j + 1) };
                let m = &mut t[c];
                let (i20, j20) = dx(2, 0);
                let (i11, j11) = dx(1, 1);
                let (i02, j02) = dx(0, 2);
                m[(0, 0)] = qform(i20, j20) + u.deriv(i20, j20);
                m[(0, 1)] = qform(i11, j11) + u.deriv(i11, j11);
                m[(1, 1)] = qform(i02, j02) + u.deriv(i02, j02);
                m[(1, 0)] = m[(0, 1)];
                let (i10, j10) = dx(1, 0);
                let (i01, j01) = dx(0, 1);
                let gpa = gp(i10, j10);
                let gpb = gp(i01, j01);
                for i in 0..2 {
                    m[(0, 2 + i)] = gpa[i];
                    m[(1, 2 + i)] = gpb[i];
                    m[(2 + i, 0)] = gpa[i];
                    m[(2 + i, 1)] = gpb[i];
                }
                let (ic, jc) = dx(0, 0);
                let gc = gmat(ic, jc);
                for i in 0..2 {
                    for j in 0..2 {
                        m[(2 + i, 2 + j)] = gc[(i, j)];
                    }
                }
            }
            // derivative in p_m: quadratic form turns into (∂∂G)p, mixed
            // block into ∂G, momentum block vanishes
            for pm in 0..2 {
                let m = &mut t[2 + pm];
                m[(0, 0)] = gp(2, 0)[pm];
                m[(0, 1)] = gp(1, 1)[pm];
                m[(1, 1)] = gp(0, 2)[pm];
                m[(1, 0)] = m[(0, 1)];
                let ga = gmat(1, 0);
                let gb = gmat(0, 1);
                for i in 0..2 {
                    m[(0, 2 + i)] = ga[(pm, i)];
                    m[(1, 2 + i)] = gb[(pm, i)];
                    m[(2 + i, 0)] = ga[(pm, i)];
                    m[(2 + i, 1)] = gb[(pm, i)];
                }
            }
            Some(t)
        } else {
            None
        };

        HamiltonianDerivatives {
            value,
            gradient,
            hessian,
            third,
        }
    }

    fn coeff_jets(&self, x: TorusPoint, order: u8) -> [Jet2; 4] {
        [
            self.metric_inv.g11.jet(x, order),
            self.metric_inv.g12.jet(x, order),
            self.metric_inv.g22.jet(x, order),
            self.potential_jet(x, order),
        ]
    }

    /// Legendre transform TT² → T*T²: p = G(x) v.
    pub fn legendre_transform(&self, tp: &TangentPoint) -> PhasePoint {
        let p = self.metric(tp.x) * tp.velocity();
        PhasePoint {
            x: tp.x,
            p1: p[0],
            p2: p[1],
        }
    }

    /// Inverse Legendre transform: v = G⁻¹(x) p.
    pub fn legendre_inverse(&self, z: &PhasePoint) -> TangentPoint {
        let v = self.metric_inverse(z.x) * z.momentum();
        TangentPoint {
            x: z.x,
            v1: v[0],
            v2: v[1],
        }
    }

    /// Mechanical energy E(x, v) = ½ vᵀ G(x) v + U(x); E = H ∘ Legendre.
    pub fn energy_function(&self, tp: &TangentPoint) -> f64 {
        let v = tp.velocity();
        0.5 * (v.transpose() * self.metric(tp.x) * v)[0] + self.potential(tp.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fd_grad(sys: &MechanicalSystem, z: &PhasePoint) -> Vector4<f64> {
        let h = 1e-6;
        let mut g = Vector4::zeros();
        for k in 0..4 {
            let mut zp = z.as_vector();
            let mut zm = z.as_vector();
            zp[k] += h;
            zm[k] -= h;
            g[k] = (sys.hamiltonian(&PhasePoint::from_vector(&zp))
                - sys.hamiltonian(&PhasePoint::from_vector(&zm)))
                / (2.0 * h);
        }
        g
    }

    fn fd_hessian(sys: &MechanicalSystem, z: &PhasePoint) -> Matrix4<f64> {
        let h = 1e-5;
        let mut m = Matrix4::zeros();
        for k in 0..4 {
            let mut zp = z.as_vector();
            let mut zm = z.as_vector();
            zp[k] += h;
            zm[k] -= h;
            let gp = sys.grad(&PhasePoint::from_vector(&zp));
            let gm = sys.grad(&PhasePoint::from_vector(&zm));
            m.set_column(k, &((gp - gm) / (2.0 * h)));
        }
        m
    }

    #[test]
    fn free_particle_hamiltonian_and_gradient() {
        let sys = MechanicalSystem::free_particle();
        let z = PhasePoint::new(1.0, 2.0, 0.3, -0.4);
        assert_relative_eq!(sys.hamiltonian(&z), 0.5 * (0.09 + 0.16));
        assert_relative_eq!(sys.grad(&z), Vector4::new(0.0, 0.0, 0.3, -0.4));
        assert_relative_eq!(sys.hessian(&z), Matrix4::from_diagonal(&Vector4::new(0.0, 0.0, 1.0, 1.0)));
    }

    #[test]
    fn pendulum_rotor_energy_at_hyperbolic_point() {
        let sys = MechanicalSystem::pendulum_rotor();
        // (x1, x2, p1, p2) = (π, 0, 0, 1): H = ½ + cos π ... U(π) = 1
        let z = PhasePoint::new(std::f64::consts::PI, 0.0, 0.0, 1.0);
        assert_relative_eq!(sys.hamiltonian(&z), 1.5, max_relative = 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences_on_anisotropic_system() {
        let sys = MechanicalSystem::anisotropic();
        let z = PhasePoint::new(0.7, -1.2, 0.5, 1.1);
        let g = sys.grad(&z);
        let gfd = fd_grad(&sys, &z);
        assert_relative_eq!(g, gfd, epsilon = 1e-8);
    }

    #[test]
    fn hessian_matches_finite_differences_and_is_symmetric() {
        let sys = MechanicalSystem::anisotropic();
        let z = PhasePoint::new(2.3, 0.4, -0.8, 0.6);
        let h = sys.hessian(&z);
        assert_relative_eq!(h, h.transpose(), epsilon = 1e-14);
        assert_relative_eq!(h, fd_hessian(&sys, &z), epsilon = 1e-8);
    }

    #[test]
    fn third_tensor_matches_finite_differences_of_hessian() {
        let sys = MechanicalSystem::anisotropic();
        let z = PhasePoint::new(1.9, 5.1, 0.2, -1.3);
        let t = sys.derivatives(&z, 3).third.unwrap();
        let h = 1e-5;
        for k in 0..4 {
            let mut zp = z.as_vector();
            let mut zm = z.as_vector();
            zp[k] += h;
            zm[k] -= h;
            let fd = (sys.hessian(&PhasePoint::from_vector(&zp))
                - sys.hessian(&PhasePoint::from_vector(&zm)))
                / (2.0 * h);
            assert_relative_eq!(t[k], fd, epsilon = 1e-7);
        }
        // total symmetry: t[k][(i,j)] invariant under permuting (k,i,j)
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    assert_relative_eq!(t[k][(i, j)], t[i][(k, j)], epsilon = 1e-13);
                    assert_relative_eq!(t[k][(i, j)], t[j][(i, k)], epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn add_potential_shifts_values_and_jets() {
        let sys = MechanicalSystem::free_particle();
        let bump = PerturbationTerm::trig(
            "one-mode",
            TrigPoly::new(0.0, vec![TrigTerm::cos(0.25, 2, 1)]),
        );
        let sys2 = sys.add_potential(bump.with_scale(2.0));
        let x = TorusPoint::new(0.3, 0.9);
        assert_relative_eq!(
            sys2.potential(x),
            0.5 * (2.0 * 0.3 + 0.9).cos(),
            max_relative = 1e-14
        );
        let z = PhasePoint::new(0.3, 0.9, 0.0, 0.0);
        let g = sys2.grad(&z);
        assert_relative_eq!(g[0], -1.0 * (2.0 * 0.3 + 0.9).sin(), max_relative = 1e-14);
    }

    #[test]
    fn metric_positive_definiteness_check_flags_bad_metric() {
        let good = MechanicalSystem::anisotropic().metric_inv;
        assert!(good.check_positive_definite(16).is_ok());
        let bad = MetricInverse {
            g11: TrigPoly::constant(1.0),
            g12: TrigPoly::constant(0.0),
            g22: TrigPoly::new(0.5, vec![TrigTerm::cos(1.0, 1, 0)]),
        };
        assert!(bad.check_positive_definite(16).is_err());
    }

    proptest! {
        #[test]
        fn legendre_roundtrip(x1 in 0.0..TAU, x2 in 0.0..TAU, v1 in -3.0..3.0f64, v2 in -3.0..3.0f64) {
            let sys = MechanicalSystem::anisotropic();
            let tp = TangentPoint::new(x1, x2, v1, v2);
            let z = sys.legendre_transform(&tp);
            let back = sys.legendre_inverse(&z);
            prop_assert!((back.v1 - v1).abs() < 1e-12);
            prop_assert!((back.v2 - v2).abs() < 1e-12);
            // energy agrees with the Hamiltonian through the transform
            prop_assert!((sys.energy_function(&tp) - sys.hamiltonian(&z)).abs() < 1e-12);
        }
    }
}
