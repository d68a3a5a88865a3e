//! Frame along a periodic orbit adapted to vertical kicks: columns
//! [X, ξ, V₁, V₂] where ξ is a variational solution whose position part
//! stays independent of ẋ (the twist condition), and V₁ = (0, w₁),
//! V₂ = (0, m) carry the dual basis [w₁; m] = [ẋ | ξₓ]⁻¹. A momentum kick
//! with Hessian φ·mmᵀ then acts as the single matrix unit −φ·E₄₂ in this
//! frame, which is what makes the response of the return map to localized
//! potentials computable entry by entry.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};

use crate::error::{Result, TorusDynError};
use crate::flow::{
    hamiltonian_field, integrate_variational, linearization, state_taylor, IntegrationOptions,
};
use crate::geom::PhasePoint;
use crate::orbits::{symplectic_frame, PeriodicOrbit};
use crate::systems::MechanicalSystem;

fn rot90(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v[1], v[0])
}

/// The adapted frame at one orbit time, with the vertical-profile data
/// P = mᵀG⁻¹m and its time derivative that drive the kick response.
#[derive(Clone, Debug)]
pub struct AdaptedFrame {
    /// Evaluation time along the orbit.
    pub t1: f64,
    /// Orbit state z(t₁).
    pub state: PhasePoint,
    /// Frame matrix T(t₁) = [X, ξ, V₁, V₂] by columns.
    pub matrix: Matrix4<f64>,
    /// Variational seed at t = 0 whose transport provides ξ.
    pub xi0: Vector4<f64>,
    /// ξ(t₁) = Φ_{t₁} ξ₀.
    pub xi: Vector4<f64>,
    /// Vertical dual of ξₓ: m·ẋ = 0, m·ξₓ = 1.
    pub m: Vector2<f64>,
    /// Vertical dual of ẋ: w₁·ẋ = 1, w₁·ξₓ = 0.
    pub w1: Vector2<f64>,
    /// Twist determinant det[ẋ | ξₓ] at t₁.
    pub det: f64,
    /// P(t₁) = mᵀ G⁻¹(x(t₁)) m.
    pub p_val: f64,
    /// dP/dt at t₁, computed analytically from ẍ, ξ̇ and the metric jets.
    pub p_dot: f64,
}

/// Build the adapted frame at orbit time t₁ with a caller-fixed seed ξ₀.
///
/// The seed must be symplectically orthogonal to the flow direction,
/// ω(X(0), ξ₀) = 0: that pairing is invariant under the transport of both
/// vectors, and it is exactly what makes the frame connection vanish in
/// the entries that would otherwise contaminate the kick-response block.
pub fn adapted_frame_with_seed(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    t1: f64,
    xi0: Vector4<f64>,
    opts: &IntegrationOptions,
) -> Result<AdaptedFrame> {
    let x0 = hamiltonian_field(sys, &orbit.initial);
    let pairing = crate::geom::omega(&x0, &xi0);
    if pairing.abs() > 1e-8 * x0.norm().max(1e-300) * xi0.norm().max(1e-300) {
        return Err(TorusDynError::invalid(format!(
            "seed is not symplectically orthogonal to the flow: ω(X, ξ₀) = {pairing:.3e}"
        )));
    }
    let var = integrate_variational(sys, &orbit.initial, t1.max(1e-9), opts)?;
    let z1 = if t1 > 0.0 { var.state(t1) } else { orbit.initial };
    let phi = if t1 > 0.0 {
        var.transition(t1)
    } else {
        Matrix4::identity()
    };
    let xi = phi * xi0;
    build_frame(sys, t1, &z1, xi0, xi)
}

/// Build the adapted frame at orbit time t₁, choosing ξ₀ within the
/// symplectic complement of the flow direction (u₂, u₂* and their sum, all
/// with ω(X, ξ₀) = 0) as the candidate with the largest twist determinant
/// at t₁.
pub fn adapted_frame(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    t1: f64,
    opts: &IntegrationOptions,
) -> Result<AdaptedFrame> {
    let frame0 = symplectic_frame(sys, &orbit.initial)?;
    let var = integrate_variational(sys, &orbit.initial, t1.max(1e-9), opts)?;
    let z1 = if t1 > 0.0 { var.state(t1) } else { orbit.initial };
    let phi = if t1 > 0.0 {
        var.transition(t1)
    } else {
        Matrix4::identity()
    };
    let xdot = {
        let f = hamiltonian_field(sys, &z1);
        Vector2::new(f[0], f[1])
    };
    let mut best: Option<(f64, Vector4<f64>, Vector4<f64>)> = None;
    for cand in [frame0.u2, frame0.u2_star, frame0.u2 + frame0.u2_star] {
        let xi = phi * cand;
        let d = xdot[0] * xi[1] - xdot[1] * xi[0];
        if best.as_ref().is_none_or(|(b, _, _)| d.abs() > b.abs()) {
            best = Some((d, cand, xi));
        }
    }
    let (_, xi0, xi) = best.expect("three candidates were tried");
    build_frame(sys, t1, &z1, xi0, xi)
}

fn build_frame(
    sys: &MechanicalSystem,
    t1: f64,
    z1: &PhasePoint,
    xi0: Vector4<f64>,
    xi: Vector4<f64>,
) -> Result<AdaptedFrame> {
    let field = hamiltonian_field(sys, z1);
    let xdot = Vector2::new(field[0], field[1]);
    let xi_x = Vector2::new(xi[0], xi[1]);
    let det = xdot[0] * xi_x[1] - xdot[1] * xi_x[0];
    let scale = xdot.norm() * xi_x.norm();
    if det.abs() < 1e-10 * scale.max(1e-10) {
        return Err(TorusDynError::chart(format!(
            "twist determinant {det:.3e} vanishes at t = {t1:.4}; shift the pulse center"
        )));
    }
    let r = rot90(xdot);
    let m = r / det;
    let w1 = Vector2::new(xi_x[1], -xi_x[0]) / det;

    let matrix = Matrix4::from_columns(&[
        field,
        xi,
        Vector4::new(0.0, 0.0, w1[0], w1[1]),
        Vector4::new(0.0, 0.0, m[0], m[1]),
    ]);

    // P = mᵀ K m with K the inverse metric at x(t₁)
    let k = sys.metric_inv.eval(z1.x);
    let p_val = (m.transpose() * k * m)[0];

    // analytic Ṗ: ṁ from ẍ and ξ̇, K̇ from the metric jets along ẋ
    let ts = state_taylor(sys, z1);
    let acc = Vector2::new(2.0 * ts[0][2], 2.0 * ts[1][2]);
    let xi_dot = linearization(sys, z1) * xi;
    let xi_x_dot = Vector2::new(xi_dot[0], xi_dot[1]);
    let r_dot = rot90(acc);
    let det_dot = r_dot.dot(&xi_x) + r.dot(&xi_x_dot);
    let m_dot = r_dot / det - r * (det_dot / (det * det));
    let k_dot = {
        let mut kd = Matrix2::zeros();
        for (poly, (i, j)) in [
            (&sys.metric_inv.g11, (0, 0)),
            (&sys.metric_inv.g12, (0, 1)),
            (&sys.metric_inv.g22, (1, 1)),
        ] {
            let jet = poly.jet(z1.x, 1);
            let d = jet.deriv(1, 0) * xdot[0] + jet.deriv(0, 1) * xdot[1];
            kd[(i, j)] = d;
            kd[(j, i)] = d;
        }
        kd
    };
    let p_dot = 2.0 * (m_dot.transpose() * k * m)[0] + (m.transpose() * k_dot * m)[0];

    Ok(AdaptedFrame {
        t1,
        state: *z1,
        matrix,
        xi0,
        xi,
        m,
        w1,
        det,
        p_val,
        p_dot,
    })
}

/// Smallest |det[ẋ | ξₓ]| over the window [t₁ − half, t₁ + half] for the
/// given seed; the twist condition requires this to stay away from zero
/// over the whole pulse support.
pub fn twist_window_min(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    xi0: Vector4<f64>,
    t1: f64,
    half: f64,
    opts: &IntegrationOptions,
) -> Result<f64> {
    let lo = t1 - half;
    let hi = t1 + half;
    if lo < 0.0 {
        return Err(TorusDynError::invalid(
            "twist window must stay inside the integrated orbit span",
        ));
    }
    let var = integrate_variational(sys, &orbit.initial, hi, opts)?;
    let mut min_abs = f64::INFINITY;
    let n = 64;
    for i in 0..=n {
        let t = lo + (hi - lo) * i as f64 / n as f64;
        let z = var.state(t);
        let f = hamiltonian_field(sys, &z);
        let xi = var.transition(t) * xi0;
        let d = f[0] * xi[1] - f[1] * xi[0];
        min_abs = min_abs.min(d.abs());
    }
    Ok(min_abs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::SymplecticMatrix4;
    use crate::orbits::{find_periodic_orbit, NewtonOptions};
    use approx::assert_relative_eq;

    fn rotor_orbit(sys: &MechanicalSystem, p2: f64, energy: f64) -> PeriodicOrbit {
        let guess = PhasePoint::new(std::f64::consts::PI, 0.0, 0.0, p2);
        find_periodic_orbit(sys, &guess, 6.3, energy, &NewtonOptions::default()).unwrap()
    }

    #[test]
    fn duality_relations_hold() {
        let sys = MechanicalSystem::pendulum_rotor();
        let orbit = rotor_orbit(&sys, 1.0, 1.5);
        let fr = adapted_frame(&sys, &orbit, 1.2, &IntegrationOptions::default()).unwrap();
        let f = hamiltonian_field(&sys, &fr.state);
        let xdot = Vector2::new(f[0], f[1]);
        let xi_x = Vector2::new(fr.xi[0], fr.xi[1]);
        assert_relative_eq!(fr.m.dot(&xdot), 0.0, epsilon = 1e-12);
        assert_relative_eq!(fr.m.dot(&xi_x), 1.0, epsilon = 1e-12);
        assert_relative_eq!(fr.w1.dot(&xdot), 1.0, epsilon = 1e-12);
        assert_relative_eq!(fr.w1.dot(&xi_x), 0.0, epsilon = 1e-12);
        assert!(fr.p_val > 0.0);
    }

    #[test]
    fn vertical_kick_reduces_to_a_single_matrix_unit() {
        let sys = MechanicalSystem::anisotropic();
        let guess = PhasePoint::new(std::f64::consts::PI, 0.0, 0.0, 3.2_f64.sqrt());
        let orbit =
            find_periodic_orbit(&sys, &guess, 9.4, 1.5, &NewtonOptions::default()).unwrap();
        let fr = adapted_frame(&sys, &orbit, 2.0, &IntegrationOptions::default()).unwrap();

        let phi = 1.3;
        let mut kick = Matrix4::zeros();
        let mm = fr.m * fr.m.transpose();
        for i in 0..2 {
            for j in 0..2 {
                kick[(2 + i, j)] = -phi * mm[(i, j)];
            }
        }
        let conj = fr.matrix.try_inverse().unwrap() * kick * fr.matrix;
        for i in 0..4 {
            for j in 0..4 {
                let expect = if (i, j) == (3, 1) { -phi } else { 0.0 };
                assert_relative_eq!(conj[(i, j)], expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn p_dot_matches_finite_differences() {
        let cases = [
            (MechanicalSystem::pendulum_rotor(), 1.0, 6.3),
            (MechanicalSystem::anisotropic(), 3.2_f64.sqrt(), 9.4),
        ];
        for (sys, p2, period_guess) in cases {
            let guess = PhasePoint::new(std::f64::consts::PI, 0.0, 0.0, p2);
            let orbit =
                find_periodic_orbit(&sys, &guess, period_guess, 1.5, &NewtonOptions::default())
                    .unwrap();
            let opts = IntegrationOptions::default();
            let t1 = 1.5;
            let fr = adapted_frame(&sys, &orbit, t1, &opts).unwrap();
            let h = 1e-4;
            let fp = adapted_frame_with_seed(&sys, &orbit, t1 + h, fr.xi0, &opts).unwrap();
            let fm = adapted_frame_with_seed(&sys, &orbit, t1 - h, fr.xi0, &opts).unwrap();
            let fd = (fp.p_val - fm.p_val) / (2.0 * h);
            assert_relative_eq!(fr.p_dot, fd, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn free_particle_has_unit_profile() {
        let sys = MechanicalSystem::free_particle();
        let orbit = PeriodicOrbit {
            initial: PhasePoint::new(0.0, 0.0, 1.0, 0.0),
            period: std::f64::consts::TAU,
            energy: 0.5,
            residual: 0.0,
            monodromy: SymplecticMatrix4::identity(),
            winding: [1, 0],
        };
        // seed with unit x₂ direction: ξₓ stays (0, 1), so m = (0, 1)
        let xi0 = Vector4::new(0.0, 1.0, 0.0, 0.0);
        let fr =
            adapted_frame_with_seed(&sys, &orbit, 0.8, xi0, &IntegrationOptions::default())
                .unwrap();
        assert_relative_eq!(fr.det, 1.0, epsilon = 1e-10);
        assert_relative_eq!(fr.m, Vector2::new(0.0, 1.0), epsilon = 1e-10);
        assert_relative_eq!(fr.p_val, 1.0, epsilon = 1e-10);
        assert_relative_eq!(fr.p_dot, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn twist_stays_positive_over_a_pulse_window() {
        let sys = MechanicalSystem::pendulum_rotor();
        let orbit = rotor_orbit(&sys, 1.0, 1.5);
        let opts = IntegrationOptions::default();
        let fr = adapted_frame(&sys, &orbit, 1.0, &opts).unwrap();
        let min_det = twist_window_min(&sys, &orbit, fr.xi0, 1.0, 0.1, &opts).unwrap();
        assert!(min_det > 1e-3, "window twist minimum {min_det:.3e}");
    }
}
