//! Symplectic frames adapted to an orbit point and the restriction of the
//! monodromy to the transverse symplectic plane.

use nalgebra::{Matrix2, Matrix4, Vector4};

use crate::error::{Result, TorusDynError};
use crate::flow::hamiltonian_field;
use crate::geom::{omega, PhasePoint, SymplecticFrame, SymplecticMatrix4};
use crate::systems::MechanicalSystem;

/// Build the frame (u1, u2, u1*, u2*) at a regular point of the level:
/// u1 is the flow direction, u1* = −∇H/‖∇H‖² its symplectic dual, and
/// (u2, u2*) a symplectic basis of their ω-orthogonal complement — the
/// transverse plane inside the tangent space of the level.
pub fn symplectic_frame(sys: &MechanicalSystem, z: &PhasePoint) -> Result<SymplecticFrame> {
    let x = hamiltonian_field(sys, z);
    let grad = sys.grad(z);
    let g2 = grad.norm_squared();
    if g2 < 1e-20 {
        return Err(TorusDynError::chart(
            "cannot frame an equilibrium: ∇H vanishes",
        ));
    }
    let u1 = x;
    let u1_star = -grad / g2;

    // remove (u1, u1*) symplectic components from a seed vector
    let reduce = |v: &Vector4<f64>| -> Vector4<f64> {
        v - omega(v, &u1_star) * u1 - omega(&u1, v) * u1_star
    };
    let seeds = [
        Vector4::new(1.0, 0.0, 0.0, 0.0),
        Vector4::new(0.0, 1.0, 0.0, 0.0),
        Vector4::new(0.0, 0.0, 1.0, 0.0),
        Vector4::new(0.0, 0.0, 0.0, 1.0),
    ];
    let reduced: Vec<Vector4<f64>> = seeds.iter().map(reduce).collect();
    // earliest strict maximum keeps the choice deterministic and axis-aligned
    // for axis-aligned orbits
    let mut i_best = 0;
    for (i, v) in reduced.iter().enumerate() {
        if v.norm() > reduced[i_best].norm() + 1e-12 {
            i_best = i;
        }
    }
    let u2 = reduced[i_best] / reduced[i_best].norm();

    let mut j_best = usize::MAX;
    let mut pairing = 0.0_f64;
    for (j, v) in reduced.iter().enumerate() {
        if j == i_best {
            continue;
        }
        let w = omega(&u2, v);
        if w.abs() > pairing.abs() + 1e-12 {
            j_best = j;
            pairing = w;
        }
    }
    if pairing.abs() < 1e-12 {
        return Err(TorusDynError::chart(
            "transverse plane collapsed while building the frame",
        ));
    }
    let u2_star = reduced[j_best] / pairing;

    let frame = SymplecticFrame {
        u1,
        u2,
        u1_star,
        u2_star,
    };
    let defect = frame.defect();
    if defect > 1e-8 {
        return Err(TorusDynError::chart(format!(
            "frame defect {defect:.3e} exceeds 1e-8"
        )));
    }
    Ok(frame)
}

/// Monodromy in frame coordinates together with its transverse 2×2 block —
/// the derivative of the Poincaré return map restricted to the energy level
/// and reduced by the flow direction.
#[derive(Clone, Debug)]
pub struct RestrictedPoincare {
    pub frame: SymplecticFrame,
    /// F⁻¹ M F.
    pub conjugated: Matrix4<f64>,
    /// Rows/columns (u2, u2*) of the conjugated monodromy.
    pub d_p: Matrix2<f64>,
    /// How far the conjugated monodromy deviates from the invariance
    /// structure M u1 = u1, (row u1*) = e3ᵀ.
    pub structure_defect: f64,
}

/// Restrict a monodromy matrix at z to the transverse plane of the frame.
pub fn restricted_poincare(
    sys: &MechanicalSystem,
    z: &PhasePoint,
    monodromy: &SymplecticMatrix4,
) -> Result<RestrictedPoincare> {
    let frame = symplectic_frame(sys, z)?;
    let m_hat = frame.conjugate(&monodromy.0);

    // flow invariance M X = X → first column is e1; energy invariance
    // dH ∘ M = dH on the level → the u1*-row reads (0, 0, 1, 0)
    let mut defect: f64 = 0.0;
    for i in 0..4 {
        let want_col = if i == 0 { 1.0 } else { 0.0 };
        defect = defect.max((m_hat[(i, 0)] - want_col).abs());
        let want_row = if i == 2 { 1.0 } else { 0.0 };
        defect = defect.max((m_hat[(2, i)] - want_row).abs());
    }

    let d_p = Matrix2::new(m_hat[(1, 1)], m_hat[(1, 3)], m_hat[(3, 1)], m_hat[(3, 3)]);
    Ok(RestrictedPoincare {
        frame,
        conjugated: m_hat,
        d_p,
        structure_defect: defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{integrate_variational, IntegrationOptions};
    use crate::geom::TAU;
    use approx::assert_relative_eq;

    #[test]
    fn free_particle_frame_matches_axis_vectors() {
        let sys = MechanicalSystem::free_particle();
        // geodesic moving along x1: X = e1
        let z = PhasePoint::new(0.0, 0.0, 1.0, 0.0);
        let f = symplectic_frame(&sys, &z).unwrap();
        assert_relative_eq!(f.u1, Vector4::new(1.0, 0.0, 0.0, 0.0), epsilon = 1e-14);
        assert_relative_eq!(
            f.u1_star,
            Vector4::new(0.0, 0.0, -1.0, 0.0),
            epsilon = 1e-14
        );
        assert_relative_eq!(f.u2, Vector4::new(0.0, 1.0, 0.0, 0.0), epsilon = 1e-14);
        assert_relative_eq!(
            f.u2_star,
            Vector4::new(0.0, 0.0, 0.0, -1.0),
            epsilon = 1e-14
        );
        assert!(f.defect() < 1e-14);
    }

    #[test]
    fn free_particle_restricted_map_is_negative_conjugate_shear() {
        let sys = MechanicalSystem::free_particle();
        let z = PhasePoint::new(0.0, 0.0, 1.0, 0.0);
        let run = integrate_variational(&sys, &z, TAU, &IntegrationOptions::default()).unwrap();
        let rp = restricted_poincare(&sys, &z, &run.monodromy()).unwrap();
        // diag(−1, 1)·[[1, T],[0, 1]]·diag(−1, 1) = [[1, −T],[0, 1]]
        let expect = Matrix2::new(1.0, -TAU, 0.0, 1.0);
        assert_relative_eq!(rp.d_p, expect, epsilon = 1e-8);
        assert!(rp.structure_defect < 1e-8);
    }

    #[test]
    fn frame_rejects_equilibria() {
        let sys = MechanicalSystem::pendulum_rotor();
        // bottom of the pendulum well with no rotor motion
        let z = PhasePoint::new(0.0, 0.0, 0.0, 0.0);
        assert!(symplectic_frame(&sys, &z).is_err());
    }
}
