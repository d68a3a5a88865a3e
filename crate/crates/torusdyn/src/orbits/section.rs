//! Poincaré section at an orbit point: the affine hyperplane through z*
//! orthogonal to the flow direction, intersected with the energy level.
//! Section coordinates are the transverse frame coordinates (u2, u2*).

use nalgebra::{Matrix2, Vector2, Vector4};

use crate::error::{Result, TorusDynError};
use crate::flow::{hamiltonian_field, integrate_flow_events, EventSpec, IntegrationOptions};
use crate::geom::{PhasePoint, SymplecticFrame};
use crate::systems::MechanicalSystem;

use super::frame::symplectic_frame;

/// Transverse section Σ = {H = k} ∩ {⟨z − z*, X(z*)⟩ = 0}.
#[derive(Clone, Debug)]
pub struct PoincareSection {
    pub base: PhasePoint,
    pub frame: SymplecticFrame,
    pub energy: f64,
    /// X(z*): the hyperplane normal and crossing direction.
    pub flow_dir: Vector4<f64>,
}

impl PoincareSection {
    pub fn new(sys: &MechanicalSystem, z_star: &PhasePoint, energy: f64) -> Result<Self> {
        let frame = symplectic_frame(sys, z_star)?;
        Ok(PoincareSection {
            base: *z_star,
            frame,
            energy,
            flow_dir: hamiltonian_field(sys, z_star),
        })
    }

    /// Hyperplane and energy residuals at z.
    pub fn residual(&self, sys: &MechanicalSystem, z: &PhasePoint) -> (f64, f64) {
        let d = z.as_vector() - self.base.as_vector();
        (d.dot(&self.flow_dir), sys.hamiltonian(z) - self.energy)
    }

    /// Transverse frame coordinates (c2, c2*) of a point near the section.
    pub fn coords(&self, z: &PhasePoint) -> Vector2<f64> {
        let c = self.frame.coords(&(z.as_vector() - self.base.as_vector()));
        Vector2::new(c[1], c[3])
    }

    /// Realize section coordinates as a phase point on Σ: starting from
    /// z* + c2·u2 + c2*·u2*, correct along X and ∇H until both the
    /// hyperplane and the energy constraints hold.
    pub fn embed(&self, sys: &MechanicalSystem, c: &Vector2<f64>) -> Result<PhasePoint> {
        let base = self.base.as_vector() + c[0] * self.frame.u2 + c[1] * self.frame.u2_star;
        let mut ab = Vector2::zeros(); // coefficients along (X, ∇H)
        for _ in 0..50 {
            let z = PhasePoint::from_vector(
                &(base + ab[0] * self.flow_dir + ab[1] * sys.grad(&self.base)),
            );
            let (r_plane, r_energy) = self.residual(sys, &z);
            if r_plane.abs() + r_energy.abs() < 1e-12 {
                return Ok(z);
            }
            let grad_here = sys.grad(&z);
            let grad_base = sys.grad(&self.base);
            let jac = Matrix2::new(
                self.flow_dir.norm_squared(),
                grad_base.dot(&self.flow_dir),
                grad_here.dot(&self.flow_dir),
                grad_here.dot(&grad_base),
            );
            let Some(inv) = jac.try_inverse() else {
                return Err(TorusDynError::chart(
                    "section embedding jacobian is singular",
                ));
            };
            ab -= inv * Vector2::new(r_plane, r_energy);
        }
        Err(TorusDynError::chart(
            "section embedding did not converge in 50 iterations",
        ))
    }

    /// Follow the flow from z to its next crossing of the section in the
    /// flow direction. `t_hint` sets the horizon (1.5× the hint) and the
    /// blanking window that skips immediate re-detections near t = 0.
    pub fn return_map(
        &self,
        sys: &MechanicalSystem,
        z: &PhasePoint,
        t_hint: f64,
        opts: &IntegrationOptions,
    ) -> Result<(PhasePoint, f64)> {
        let base = self.base.as_vector();
        let normal = self.flow_dir;
        // the angular offsets wrap, so g jumps at the torus cut; genuine
        // crossings are told apart from cut artifacts by |g| afterwards
        let g = move |_t: f64, y: &[f64]| {
            crate::geom::angle_diff(y[0], base[0]) * normal[0]
                + crate::geom::angle_diff(y[1], base[1]) * normal[1]
                + (y[2] - base[2]) * normal[2]
                + (y[3] - base[3]) * normal[3]
        };
        let ev = EventSpec {
            g: &g,
            direction: 1,
            terminal: false,
        };
        let tr = integrate_flow_events(sys, z, 1.5 * t_hint, opts, &[ev])?;
        let blank = 0.05 * t_hint;
        let residual_cap = 1e-6 * (1.0 + normal.norm());
        let hit = tr
            .events
            .iter()
            .find(|h| h.t > blank && g(h.t, &h.y).abs() < residual_cap)
            .ok_or_else(|| TorusDynError::NoOrbit {
                iterations: 0,
                residual: f64::NAN,
            })?;
        Ok((
            PhasePoint::new(hit.y[0], hit.y[1], hit.y[2], hit.y[3]),
            hit.t,
        ))
    }
}
