//! Hamiltonian vector fields and their flows: plain phase flow, variational
//! flow (transition matrices), co-integrated inverse transition matrices,
//! and the inhomogeneous variational equation driven by a forcing term.

pub mod dop853;
mod tableau;

pub use dop853::{
    brentq, integrate, EventHit, EventSpec, IntegrationOptions, OdeRhs, Trajectory,
};

use nalgebra::{Matrix4, Vector4};

use crate::error::Result;
use crate::geom::{jc_matrix, PhasePoint, SymplecticMatrix4};
use crate::systems::MechanicalSystem;

/// Hamiltonian vector field X = J_c ∇H: (ẋ, ṗ) = (H_p, −H_x).
pub fn hamiltonian_field(sys: &MechanicalSystem, z: &PhasePoint) -> Vector4<f64> {
    let g = sys.grad(z);
    Vector4::new(g[2], g[3], -g[0], -g[1])
}

/// Field normal to the energy levels: Y = ∇H, so ω(Y, X) = ‖∇H‖² > 0 away
/// from equilibria and flowing along Y increases the energy.
pub fn normal_field(sys: &MechanicalSystem, z: &PhasePoint) -> Vector4<f64> {
    sys.grad(z)
}

/// Linearization A(t) = J_c ∇²H(z(t)) of the Hamiltonian field.
pub fn linearization(sys: &MechanicalSystem, z: &PhasePoint) -> Matrix4<f64> {
    jc_matrix() * sys.hessian(z)
}

struct MechRhs<'a> {
    sys: &'a MechanicalSystem,
}

impl OdeRhs for MechRhs<'_> {
    fn dim(&self) -> usize {
        4
    }
    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let z = PhasePoint::new(y[0], y[1], y[2], y[3]);
        let x = hamiltonian_field(self.sys, &z);
        dydt.copy_from_slice(x.as_slice());
    }
}

/// Integrate the phase flow from z0 over [0, t_final].
pub fn integrate_flow(
    sys: &MechanicalSystem,
    z0: &PhasePoint,
    t_final: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    integrate_flow_events(sys, z0, t_final, opts, &[])
}

/// Phase flow with event functions watched along the way.
pub fn integrate_flow_events(
    sys: &MechanicalSystem,
    z0: &PhasePoint,
    t_final: f64,
    opts: &IntegrationOptions,
    events: &[EventSpec],
) -> Result<Trajectory> {
    let rhs = MechRhs { sys };
    integrate(&rhs, 0.0, t_final, z0.as_vector().as_slice(), opts, events)
}

/// State at time t of a trajectory whose first four components are phase
/// coordinates.
pub fn phase_at(tr: &Trajectory, t: f64) -> PhasePoint {
    let y = tr.eval(t);
    PhasePoint::new(y[0], y[1], y[2], y[3])
}

fn unpack_matrix(y: &[f64]) -> Matrix4<f64> {
    Matrix4::from_column_slice(y)
}

struct VariationalRhs<'a> {
    sys: &'a MechanicalSystem,
    with_inverse: bool,
}

impl OdeRhs for VariationalRhs<'_> {
    fn dim(&self) -> usize {
        if self.with_inverse {
            36
        } else {
            20
        }
    }
    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let z = PhasePoint::new(y[0], y[1], y[2], y[3]);
        let x = hamiltonian_field(self.sys, &z);
        dydt[..4].copy_from_slice(x.as_slice());
        let a = linearization(self.sys, &z);
        let m = unpack_matrix(&y[4..20]);
        let dm = a * m;
        dydt[4..20].copy_from_slice(dm.as_slice());
        if self.with_inverse {
            let w = unpack_matrix(&y[20..36]);
            let dw = -w * a;
            dydt[20..36].copy_from_slice(dw.as_slice());
        }
    }
}

/// Joint solution of the phase flow and its variational equation
/// Ṁ = A(t) M, M(0) = I; optionally the inverse transition Ẇ = −W A(t).
pub struct VariationalRun {
    pub trajectory: Trajectory,
    pub t_final: f64,
    with_inverse: bool,
}

impl VariationalRun {
    pub fn state(&self, t: f64) -> PhasePoint {
        phase_at(&self.trajectory, t)
    }

    /// Transition matrix Φ_t of the linearized flow.
    pub fn transition(&self, t: f64) -> Matrix4<f64> {
        let y = self.trajectory.eval(t);
        unpack_matrix(&y[4..20])
    }

    /// Inverse transition Φ_t⁻¹, available when co-integrated.
    pub fn inverse_transition(&self, t: f64) -> Matrix4<f64> {
        assert!(self.with_inverse, "inverse transition was not co-integrated");
        let y = self.trajectory.eval(t);
        unpack_matrix(&y[20..36])
    }

    pub fn monodromy(&self) -> SymplecticMatrix4 {
        SymplecticMatrix4(self.transition(self.t_final))
    }

    pub fn end_state(&self) -> PhasePoint {
        self.state(self.t_final)
    }
}

/// Integrate flow + variational equation over [0, t_final].
pub fn integrate_variational(
    sys: &MechanicalSystem,
    z0: &PhasePoint,
    t_final: f64,
    opts: &IntegrationOptions,
) -> Result<VariationalRun> {
    variational_impl(sys, z0, t_final, opts, false)
}

/// Same, with the inverse transition matrix co-integrated (no matrix
/// inversions when evaluating Φ_t⁻¹ later).
pub fn integrate_variational_with_inverse(
    sys: &MechanicalSystem,
    z0: &PhasePoint,
    t_final: f64,
    opts: &IntegrationOptions,
) -> Result<VariationalRun> {
    variational_impl(sys, z0, t_final, opts, true)
}

fn variational_impl(
    sys: &MechanicalSystem,
    z0: &PhasePoint,
    t_final: f64,
    opts: &IntegrationOptions,
    with_inverse: bool,
) -> Result<VariationalRun> {
    let rhs = VariationalRhs { sys, with_inverse };
    let mut y0 = vec![0.0; rhs.dim()];
    y0[..4].copy_from_slice(z0.as_vector().as_slice());
    let eye = Matrix4::<f64>::identity();
    y0[4..20].copy_from_slice(eye.as_slice());
    if with_inverse {
        y0[20..36].copy_from_slice(eye.as_slice());
    }
    let trajectory = integrate(&rhs, 0.0, t_final, &y0, opts, &[])?;
    Ok(VariationalRun {
        trajectory,
        t_final,
        with_inverse,
    })
}

/// Flow transverse to the energy levels: ż = ∇H/‖∇H‖², so H(z(s)) grows
/// linearly in s with unit rate and the endpoint lands on H = H(z0) + dh.
pub fn integrate_normal_flow(
    sys: &MechanicalSystem,
    z0: &PhasePoint,
    dh: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    let rhs = (4usize, |_t: f64, y: &[f64], dydt: &mut [f64]| {
        let z = PhasePoint::new(y[0], y[1], y[2], y[3]);
        let g = sys.grad(&z);
        let n2 = g.norm_squared();
        let v = g / n2;
        dydt.copy_from_slice(v.as_slice());
    });
    integrate(&rhs, 0.0, dh, z0.as_vector().as_slice(), opts, &[])
}

/// Result of the forced variational run: endpoint of the response
/// v(T) = ∫₀ᵀ Φ_T Φ_s⁻¹ b(s) ds computed as Φ_T · ∫ Φ_s⁻¹ b(s) ds.
pub struct ForcedResponse {
    pub response: Vector4<f64>,
    pub monodromy: SymplecticMatrix4,
    pub end_state: PhasePoint,
}

/// Solve v̇ = A(t) v + b(t, z(t)), v(0) = 0 alongside the flow. The forcing
/// is integrated in the co-moving frame (accumulator q with q̇ = Φ_t⁻¹ b),
/// which keeps the quadrature exact under step-size control.
pub fn forced_variational(
    sys: &MechanicalSystem,
    z0: &PhasePoint,
    t_final: f64,
    forcing: &dyn Fn(f64, &PhasePoint) -> Vector4<f64>,
    opts: &IntegrationOptions,
) -> Result<ForcedResponse> {
    let rhs = (40usize, |t: f64, y: &[f64], dydt: &mut [f64]| {
        let z = PhasePoint::new(y[0], y[1], y[2], y[3]);
        let x = hamiltonian_field(sys, &z);
        dydt[..4].copy_from_slice(x.as_slice());
        let a = linearization(sys, &z);
        let m = unpack_matrix(&y[4..20]);
        let dm = a * m;
        dydt[4..20].copy_from_slice(dm.as_slice());
        let w = unpack_matrix(&y[20..36]);
        let dw = -w * a;
        dydt[20..36].copy_from_slice(dw.as_slice());
        let b = forcing(t, &z);
        let dq = w * b;
        dydt[36..40].copy_from_slice(dq.as_slice());
    });
    let mut y0 = vec![0.0; 40];
    y0[..4].copy_from_slice(z0.as_vector().as_slice());
    let eye = Matrix4::<f64>::identity();
    y0[4..20].copy_from_slice(eye.as_slice());
    y0[20..36].copy_from_slice(eye.as_slice());
    let tr = integrate(&rhs, 0.0, t_final, &y0, opts, &[])?;
    let m_end = unpack_matrix(&tr.y_end[4..20]);
    let q_end = Vector4::from_column_slice(&tr.y_end[36..40]);
    Ok(ForcedResponse {
        response: m_end * q_end,
        monodromy: SymplecticMatrix4(m_end),
        end_state: PhasePoint::new(tr.y_end[0], tr.y_end[1], tr.y_end[2], tr.y_end[3]),
    })
}

/// Taylor coefficients (through order 4) of the orbit t ↦ z(z0; t) at t = 0,
/// one `[f64; 5]` per phase coordinate. Orders 0–3 are assembled from exact
/// derivative tensors of H; the order-4 coefficient differences the order-3
/// formula along the flow, so only degree-4 uses of the curve feel its
/// O(1e-8) error.
pub fn state_taylor(sys: &MechanicalSystem, z0: &PhasePoint) -> [[f64; 5]; 4] {
    let jc = jc_matrix();
    let third_dot = |z: &PhasePoint, w: &Vector4<f64>| -> Matrix4<f64> {
        let t = sys.derivatives(z, 3).third.unwrap();
        t[0] * w[0] + t[1] * w[1] + t[2] * w[2] + t[3] * w[3]
    };
    // z⃛ as a function of the point alone
    let jerk = |z: &PhasePoint| -> (Vector4<f64>, Vector4<f64>, Vector4<f64>) {
        let v = hamiltonian_field(sys, z);
        let a = linearization(sys, z);
        let acc = a * v;
        let jk = jc * (third_dot(z, &v) * v) + a * acc;
        (v, acc, jk)
    };
    let (v, acc, jk) = jerk(z0);
    // fourth derivative by differencing the jerk formula along the flow
    let speed = v.norm();
    let snap = if speed == 0.0 {
        Vector4::zeros()
    } else {
        let eps = 1e-4 / speed.max(1.0);
        let zp = PhasePoint::from_vector(&(z0.as_vector() + eps * v));
        let zm = PhasePoint::from_vector(&(z0.as_vector() - eps * v));
        let (_, _, jp) = jerk(&zp);
        let (_, _, jm) = jerk(&zm);
        (jp - jm) / (2.0 * eps)
    };
    let z = z0.as_vector();
    let mut out = [[0.0; 5]; 4];
    for i in 0..4 {
        out[i] = [
            z[i],
            v[i],
            acc[i] / 2.0,
            jk[i] / 6.0,
            snap[i] / 24.0,
        ];
    }
    out
}
