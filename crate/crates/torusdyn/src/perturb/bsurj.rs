//! Linear response of the time-T flow map to switching on a pulse
//! potential, measured by forced variational integration and predicted in
//! closed form in the zero-width limit. The span of the responses over a
//! small pulse family certifies that the perturbations reach the whole
//! plane transverse to the orbit inside its energy level.

use nalgebra::{Matrix2x3, Matrix4x2, Vector2, Vector4};

use crate::error::{Result, TorusDynError};
use crate::flow::{
    forced_variational, integrate_variational_with_inverse, linearization, state_taylor,
    IntegrationOptions,
};
use crate::geom::PhasePoint;
use crate::orbits::{symplectic_frame, PeriodicOrbit};
use crate::systems::{MechanicalSystem, PerturbationTerm};

/// Derivative at s = 0 of the time-T flow of H + s·h with respect to s,
/// along the unperturbed orbit of z₀. The potential enters the linearized
/// dynamics as the forcing (0, −∇h(x(t))).
///
/// When the forcing is supported on a short time window (a narrow pulse),
/// `opts.max_step` must not exceed roughly a third of that window: step
/// control only sees the forcing at stage points, and an unbounded step
/// can straddle the support.
pub fn pulse_response(
    sys: &MechanicalSystem,
    z0: &PhasePoint,
    t_final: f64,
    term: &PerturbationTerm,
    opts: &IntegrationOptions,
) -> Result<Vector4<f64>> {
    let forcing = |_t: f64, z: &PhasePoint| {
        let jet = term.jet(z.x, 1);
        Vector4::new(0.0, 0.0, -jet.deriv(1, 0), -jet.deriv(0, 1))
    };
    Ok(forced_variational(sys, z0, t_final, &forcing, opts)?.response)
}

/// Zero-width limit of [`pulse_response`] for the pulse h_{α,β} centered at
/// orbit time t₀, computed from the variational flow alone:
///
///   B = −Φ_T Φ_{t₀}⁻¹ { (0, α n̂) + A(t₀)(0, β n̂) − (0, β̇ n̂ + β n̂′) }
///
/// with all profile values taken at t₀ (`alpha`, `beta` are coefficient
/// lists in powers of t − t₀) and n̂ the unit normal to the orbit's
/// position curve.
pub fn pulse_response_limit(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    t0: f64,
    alpha: &[f64],
    beta: &[f64],
    opts: &IntegrationOptions,
) -> Result<Vector4<f64>> {
    if !(t0 > 0.0 && t0 < orbit.period) {
        return Err(TorusDynError::invalid(format!(
            "pulse center {t0:.4} must lie strictly inside (0, {:.4})",
            orbit.period
        )));
    }
    let var = integrate_variational_with_inverse(sys, &orbit.initial, orbit.period, opts)?;
    let z_t0 = var.state(t0);

    // n̂ and its time derivative from the local curve expansion
    let s = state_taylor(sys, &z_t0);
    let v = Vector2::new(s[0][1], s[1][1]);
    let acc = Vector2::new(2.0 * s[0][2], 2.0 * s[1][2]);
    let speed = v.norm();
    if speed < 1e-10 {
        return Err(TorusDynError::chart(
            "orbit velocity vanishes at the pulse center; normal undefined",
        ));
    }
    let rot = |w: Vector2<f64>| Vector2::new(-w[1], w[0]);
    let n = rot(v) / speed;
    let n_dot = rot(acc) / speed - rot(v) * (v.dot(&acc) / speed.powi(3));

    let a0 = alpha.first().copied().unwrap_or(0.0);
    let b0 = beta.first().copied().unwrap_or(0.0);
    let b1 = beta.get(1).copied().unwrap_or(0.0);

    let vertical = |w: Vector2<f64>| Vector4::new(0.0, 0.0, w[0], w[1]);
    let a_mat = linearization(sys, &z_t0);
    let kick = vertical(n * a0) + a_mat * vertical(n * b0) - vertical(n_dot * b0 + n * b1);
    Ok(-(var.transition(orbit.period) * (var.inverse_transition(t0) * kick)))
}

/// Responses of the canonical three-pulse family {α = 1}, {β = 1},
/// {β = t − t₀} at one pulse center, with the measures of how much of the
/// transverse plane they span. (Distributionally (t − t₀)δ′ = −δ, so the
/// third generator mirrors the first; it is kept as a consistency witness.)
#[derive(Clone, Debug)]
pub struct PulseSpan {
    /// Zero-width responses of the three generators.
    pub responses: [Vector4<f64>; 3],
    /// Their coordinates along (u₂, u₂*) of the orbit frame, one column
    /// per generator.
    pub transverse: Matrix2x3<f64>,
    /// Smallest singular value of `transverse`; positive iff the family
    /// surjects onto the transverse plane.
    pub transverse_min_singular: f64,
    /// Largest relative distance of a response from span{X(z₀), ∇H(z₀)};
    /// positive iff the responses leave the flow–gradient plane.
    pub containment_residual: f64,
}

/// Span analysis of the three-pulse family at orbit time t₀.
pub fn pulse_span(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    t0: f64,
    opts: &IntegrationOptions,
) -> Result<PulseSpan> {
    let generators: [(&[f64], &[f64]); 3] = [(&[1.0], &[]), (&[], &[1.0]), (&[], &[0.0, 1.0])];
    let mut responses = [Vector4::zeros(); 3];
    for (r, (al, be)) in responses.iter_mut().zip(generators) {
        *r = pulse_response_limit(sys, orbit, t0, al, be, opts)?;
    }

    let frame = symplectic_frame(sys, &orbit.initial)?;
    let mut transverse = Matrix2x3::zeros();
    for (j, r) in responses.iter().enumerate() {
        let c = frame.coords(r);
        transverse[(0, j)] = c[1];
        transverse[(1, j)] = c[3];
    }
    let sv = transverse.svd(false, false).singular_values;
    let transverse_min_singular = sv[sv.len() - 1];

    // how far the responses leave the flow–gradient plane
    let x_field = crate::flow::hamiltonian_field(sys, &orbit.initial);
    let grad = crate::flow::normal_field(sys, &orbit.initial);
    let basis = Matrix4x2::from_columns(&[x_field, grad]);
    let svd = basis.svd(true, true);
    let mut containment_residual = 0.0_f64;
    for r in &responses {
        let coeff = svd.solve(r, 1e-13).map_err(TorusDynError::chart)?;
        let resid = (r - basis * coeff).norm() / r.norm().max(1e-300);
        containment_residual = containment_residual.max(resid);
    }

    Ok(PulseSpan {
        responses,
        transverse,
        transverse_min_singular,
        containment_residual,
    })
}
