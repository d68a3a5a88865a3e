//! Response of the monodromy to a kick family δ, δ′, δ″ in the adapted
//! frame. The derivative of the conjugated monodromy with respect to the
//! kick amplitude collapses, in the (ξ, V₂) block, to closed-form entries
//! driven by the vertical profile P and its time derivative; this module
//! provides both the closed form and an independent quadrature measurement
//! of the same object.

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2};

use crate::error::Result;
use crate::flow::{
    hamiltonian_field, integrate_variational_with_inverse, IntegrationOptions,
};
use crate::orbits::PeriodicOrbit;
use crate::systems::MechanicalSystem;

use super::adapted::AdaptedFrame;
use super::delta::{gauss_legendre, MollifiedDelta};

/// Amplitudes (a, b, c) of the kick profile φ = a·δ + b·δ′ + c·δ″.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KickProfile {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Closed-form (ξ, V₂) block of the kick response:
///
///   [ −bP + cṖ    2cP²      ]
///   [ −a          bP − cṖ  ]
///
/// with P, Ṗ taken from the adapted frame at the pulse center.
pub fn zmap_predicted(frame: &AdaptedFrame, kick: &KickProfile) -> Matrix2<f64> {
    let p = frame.p_val;
    let pd = frame.p_dot;
    let z11 = -kick.b * p + kick.c * pd;
    Matrix2::new(z11, 2.0 * kick.c * p * p, -kick.a, -z11)
}

/// Jacobian of (z₁₁, z₁₂, z₂₁) with respect to (a, b, c); its determinant
/// is 2P³, so the kick family reaches all three independent entries
/// exactly when P ≠ 0.
pub fn zmap_sensitivity(frame: &AdaptedFrame) -> Matrix3<f64> {
    let p = frame.p_val;
    let pd = frame.p_dot;
    Matrix3::new(0.0, -p, pd, 0.0, 0.0, 2.0 * p * p, -1.0, 0.0, 0.0)
}

/// Extract the (ξ, V₂) block, rows and columns 2 and 4 of the adapted
/// frame ordering.
pub fn pi_of_z(z: &Matrix4<f64>) -> Matrix2<f64> {
    Matrix2::new(z[(1, 1)], z[(1, 3)], z[(3, 1)], z[(3, 3)])
}

/// Measure the kick response by quadrature of the Duhamel integral
///
///   𝒵 = (T⁻¹Φ_{t₁}) · [ −∫ φ(s) Φ_s⁻¹ ΔA(s) Φ_s ds ] · (Φ_{t₁}⁻¹T)
///
/// with ΔA(s) the vertical kick −φ(s)·m(s)m(s)ᵀ against the transported
/// frame duals. Agrees with the closed form up to the pulse-width error
/// of the mollifier moments.
pub fn zmap_quadrature(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    frame: &AdaptedFrame,
    delta: &MollifiedDelta,
    kick: &KickProfile,
    opts: &IntegrationOptions,
) -> Result<Matrix4<f64>> {
    let (lo, hi) = delta.support();
    let var = integrate_variational_with_inverse(sys, &orbit.initial, hi, opts)?;
    let (nodes, weights) = gauss_legendre(64);

    let mut integral = Matrix4::zeros();
    let panels = 4;
    for panel in 0..panels {
        let a = lo + (hi - lo) * panel as f64 / panels as f64;
        let b = lo + (hi - lo) * (panel + 1) as f64 / panels as f64;
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (&u, &w) in nodes.iter().zip(&weights) {
            let s = mid + half * u;
            let z = var.state(s);
            let phi_s = var.transition(s);
            let phi_s_inv = var.inverse_transition(s);
            // transported duals at s: m(s) = rot90(ẋ)/det[ẋ | ξₓ]
            let f = hamiltonian_field(sys, &z);
            let xdot = Vector2::new(f[0], f[1]);
            let xi = phi_s * frame.xi0;
            let det = xdot[0] * xi[1] - xdot[1] * xi[0];
            let m = Vector2::new(-xdot[1], xdot[0]) / det;
            let phi_val = kick.a * delta.deriv(s, 0)
                + kick.b * delta.deriv(s, 1)
                + kick.c * delta.deriv(s, 2);
            let mut kick_mat = Matrix4::zeros();
            for i in 0..2 {
                for j in 0..2 {
                    kick_mat[(2 + i, j)] = -phi_val * m[i] * m[j];
                }
            }
            integral += phi_s_inv * kick_mat * phi_s * (w * half);
        }
    }

    let phi_t1 = var.transition(frame.t1);
    let t_inv = frame
        .matrix
        .try_inverse()
        .expect("adapted frame is invertible by construction");
    Ok(t_inv * phi_t1 * integral * phi_t1.try_inverse().unwrap() * frame.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{PhasePoint, SymplecticMatrix4};
    use crate::orbits::{find_periodic_orbit, NewtonOptions};
    use crate::perturb::adapted::{adapted_frame, adapted_frame_with_seed};
    use approx::assert_relative_eq;
    use nalgebra::Vector4;

    #[test]
    fn sensitivity_determinant_is_twice_p_cubed() {
        let sys = MechanicalSystem::pendulum_rotor();
        let guess = PhasePoint::new(std::f64::consts::PI, 0.0, 0.0, 1.0);
        let orbit =
            find_periodic_orbit(&sys, &guess, 6.3, 1.5, &NewtonOptions::default()).unwrap();
        let frame = adapted_frame(&sys, &orbit, 1.0, &IntegrationOptions::default()).unwrap();
        let ds = zmap_sensitivity(&frame);
        assert_relative_eq!(
            ds.determinant(),
            2.0 * frame.p_val.powi(3),
            max_relative = 1e-12
        );
        assert!(frame.p_val.abs() > 1e-6);
    }

    #[test]
    fn quadrature_matches_closed_form_for_the_free_particle() {
        let sys = MechanicalSystem::free_particle();
        let orbit = PeriodicOrbit {
            initial: PhasePoint::new(0.0, 0.0, 1.0, 0.0),
            period: std::f64::consts::TAU,
            energy: 0.5,
            residual: 0.0,
            monodromy: SymplecticMatrix4::identity(),
            winding: [1, 0],
        };
        let opts = IntegrationOptions::default();
        let xi0 = Vector4::new(0.0, 1.0, 0.0, 0.0);
        let frame = adapted_frame_with_seed(&sys, &orbit, 1.0, xi0, &opts).unwrap();
        let kick = KickProfile {
            a: 0.7,
            b: -0.4,
            c: 0.9,
        };
        let delta = MollifiedDelta::new(1.0, 0.02).unwrap();
        let z = zmap_quadrature(&sys, &orbit, &frame, &delta, &kick, &opts).unwrap();
        let expected = Matrix2::new(-kick.b, 2.0 * kick.c, -kick.a, kick.b);
        let got = pi_of_z(&z);
        assert_relative_eq!(got, expected, epsilon = 1e-4);
        assert_relative_eq!(zmap_predicted(&frame, &kick), expected, epsilon = 1e-12);
    }

    #[test]
    fn rotor_quadrature_converges_quadratically_to_the_closed_form() {
        let sys = MechanicalSystem::pendulum_rotor();
        let guess = PhasePoint::new(std::f64::consts::PI, 0.0, 0.0, 1.0);
        let orbit =
            find_periodic_orbit(&sys, &guess, 6.3, 1.5, &NewtonOptions::default()).unwrap();
        let opts = IntegrationOptions::default();
        let frame = adapted_frame(&sys, &orbit, 1.0, &opts).unwrap();
        let kick = KickProfile {
            a: 0.5,
            b: 0.8,
            c: 0.6,
        };
        let predicted = zmap_predicted(&frame, &kick);
        let mut errs = Vec::new();
        for eps in [0.04, 0.02, 0.01] {
            let delta = MollifiedDelta::new(1.0, eps).unwrap();
            let z = zmap_quadrature(&sys, &orbit, &frame, &delta, &kick, &opts).unwrap();
            // the response is confined to the (ξ, V₂) block
            let mut off_block = 0.0_f64;
            for i in 0..4 {
                for j in 0..4 {
                    if (i == 1 || i == 3) && (j == 1 || j == 3) {
                        continue;
                    }
                    off_block = off_block.max(z[(i, j)].abs());
                }
            }
            assert!(off_block < 1e-9, "leakage outside the block: {off_block:.3e}");
            errs.push((pi_of_z(&z) - predicted).norm());
        }
        // halving the width must cut the moment error by ~4
        assert!(errs[0] < 1e-3, "errors {errs:?}");
        assert!(errs[1] < 0.35 * errs[0], "errors {errs:?}");
        assert!(errs[2] < 0.35 * errs[1], "errors {errs:?}");
    }
}
