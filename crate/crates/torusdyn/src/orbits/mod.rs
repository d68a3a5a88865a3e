//! Periodic orbits at fixed energy: closure residuals, the Newton–Gauss
//! orbit finder, minimal-period reduction, transverse frames, degeneracy
//! and stability classification, grid scans, level regularity, and focal
//! (twist) times.

mod classify;
mod frame;
mod level;
mod scan;
mod section;
mod twist;

pub use classify::{
    classify_nondegeneracy, classify_stability, monodromy_factorization_defect, MVerdict,
    NondegeneracyReport, OrbitClass, StabilityReport,
};
pub use frame::{restricted_poincare, symplectic_frame, RestrictedPoincare};
pub use level::{regular_level_check, RegularLevelReport};
pub use scan::{scan_short_orbits, ScanOptions, ScanResult};
pub use section::PoincareSection;
pub use twist::{twist_times, TwistReport};

use nalgebra::{SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TorusDynError};
use crate::flow::{integrate_variational, hamiltonian_field, IntegrationOptions};
use crate::geom::{angle_diff, PhasePoint, SymplecticMatrix4};
use crate::systems::MechanicalSystem;

/// Closure residual of a candidate periodic orbit: where the time-T image
/// lands relative to the start, and how far the start is off the level.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RhoValue {
    /// ψ_T(θ) ⊖ θ with torus-wrapped angle components.
    pub closure: Vector4<f64>,
    /// H(θ) − k.
    pub energy_error: f64,
    pub norm: f64,
}

/// Evaluate the closure residual ρ(θ, T) at energy k.
pub fn rho_eval(
    sys: &MechanicalSystem,
    z: &PhasePoint,
    period: f64,
    energy: f64,
    opts: &IntegrationOptions,
) -> Result<RhoValue> {
    let tr = crate::flow::integrate_flow(sys, z, period, opts)?;
    let end = &tr.y_end;
    let closure = wrapped_difference(end, z);
    let energy_error = sys.hamiltonian(z) - energy;
    let norm = (closure.norm_squared() + energy_error * energy_error).sqrt();
    Ok(RhoValue {
        closure,
        energy_error,
        norm,
    })
}

fn wrapped_difference(end: &[f64], start: &PhasePoint) -> Vector4<f64> {
    Vector4::new(
        angle_diff(end[0], start.x.x1),
        angle_diff(end[1], start.x.x2),
        end[2] - start.p1,
        end[3] - start.p2,
    )
}

/// A located periodic orbit on the energy level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub initial: PhasePoint,
    pub period: f64,
    pub energy: f64,
    /// Final closure residual norm.
    pub residual: f64,
    pub monodromy: SymplecticMatrix4,
    /// Net winding of the orbit on the torus over one period.
    pub winding: [i32; 2],
}

impl PeriodicOrbit {
    /// State at orbit time t (re-integrates; prefer a cached
    /// [`crate::flow::VariationalRun`] for repeated queries).
    pub fn state_at(
        &self,
        sys: &MechanicalSystem,
        t: f64,
        opts: &IntegrationOptions,
    ) -> Result<PhasePoint> {
        let tr = crate::flow::integrate_flow(sys, &self.initial, t, opts)?;
        Ok(PhasePoint::new(
            tr.y_end[0],
            tr.y_end[1],
            tr.y_end[2],
            tr.y_end[3],
        ))
    }
}

/// Controls for the orbit finder.
#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Convergence threshold on the 5-component residual norm.
    pub tol: f64,
    pub integration: IntegrationOptions,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 60,
            tol: 1e-10,
            integration: IntegrationOptions::default(),
        }
    }
}

/// Rescale the momentum along its ray so that H(x, s·p) = k. Fails when the
/// point sits above the energy level (U(x) ≥ k) or the momentum vanishes.
pub fn project_to_level(
    sys: &MechanicalSystem,
    z: &PhasePoint,
    energy: f64,
) -> Result<PhasePoint> {
    let u = sys.potential(z.x);
    let kinetic = sys.hamiltonian(z) - u;
    if energy - u <= 0.0 {
        return Err(TorusDynError::degenerate(format!(
            "potential {u:.6} at the guess exceeds the energy {energy:.6}"
        )));
    }
    if kinetic <= 1e-14 {
        return Err(TorusDynError::degenerate(
            "zero momentum guess cannot be projected onto the level",
        ));
    }
    let s = ((energy - u) / kinetic).sqrt();
    Ok(PhasePoint {
        x: z.x,
        p1: z.p1 * s,
        p2: z.p2 * s,
    })
}

/// Locate a periodic orbit of the energy-k flow near (guess, period_guess).
///
/// Solves the seven-row least-squares system per iteration: four closure
/// rows ψ_T(θ) ⊖ θ, one energy row H(θ) − k, and two zero-residual gauge
/// rows that pin the update transverse to the flow direction and to the
/// level normal. The guess is re-projected onto the level each iteration so
/// the gauge rows stay consistent with the energy row.
pub fn find_periodic_orbit(
    sys: &MechanicalSystem,
    guess: &PhasePoint,
    period_guess: f64,
    energy: f64,
    opts: &NewtonOptions,
) -> Result<PeriodicOrbit> {
    if period_guess <= 1e-3 {
        return Err(TorusDynError::degenerate(format!(
            "period guess {period_guess:.3e} is below the minimum 1e-3"
        )));
    }
    let mut theta = project_to_level(sys, guess, energy)?;
    let mut period = period_guess;
    let mut last_residual = f64::INFINITY;

    for iter in 0..opts.max_iter {
        let run = integrate_variational(sys, &theta, period, &opts.integration)?;
        let end = run.end_state();
        let closure = wrapped_difference(end.as_vector().as_slice(), &theta);
        let energy_error = sys.hamiltonian(&theta) - energy;
        let residual = (closure.norm_squared() + energy_error * energy_error).sqrt();
        last_residual = residual;

        if residual <= opts.tol {
            return finish_orbit(sys, &theta, period, energy, residual, run.monodromy());
        }

        let m = run.monodromy().0;
        let x_end = hamiltonian_field(sys, &end);
        let x_start = hamiltonian_field(sys, &theta);
        let grad = sys.grad(&theta);

        // rows: closure (4), energy (1), gauges (2); unknowns: (δθ, δT)
        let mut jac = SMatrix::<f64, 7, 5>::zeros();
        let mut rhs = SVector::<f64, 7>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                jac[(i, j)] = m[(i, j)] - if i == j { 1.0 } else { 0.0 };
            }
            jac[(i, 4)] = x_end[i];
            rhs[i] = -closure[i];
        }
        for j in 0..4 {
            jac[(4, j)] = grad[j];
            jac[(5, j)] = x_start[j];
            jac[(6, j)] = grad[j];
        }
        rhs[4] = -energy_error;
        // rows 5–6 demand ⟨X, δθ⟩ = 0 and ⟨∇H, δθ⟩ = 0

        let svd = jac.svd(true, true);
        let delta = svd
            .solve(&rhs, 1e-12 * svd.singular_values.max())
            .map_err(|e| TorusDynError::IllConditioned {
                what: format!("orbit correction solve: {e}"),
                estimate: f64::NAN,
            })?;

        // step limiting plus backtracking: halve the step until the closure
        // residual actually drops, so rough guesses near strongly hyperbolic
        // orbits do not overshoot out of the basin
        let step_norm = delta.norm();
        let cap = 1.0 + 0.5 * period;
        let mut lambda = if step_norm > cap { cap / step_norm } else { 1.0 };
        let mut accepted = false;
        for _ in 0..9 {
            let trial = PhasePoint::new(
                theta.x.x1 + lambda * delta[0],
                theta.x.x2 + lambda * delta[1],
                theta.p1 + lambda * delta[2],
                theta.p2 + lambda * delta[3],
            )
            .wrap();
            let trial_period = period + lambda * delta[4];
            if trial_period <= 1e-3 {
                lambda *= 0.5;
                continue;
            }
            // a trial that leaves the allowed region or breaks the
            // integrator is a failed trial, not a fatal error
            let Ok(projected) = project_to_level(sys, &trial, energy) else {
                lambda *= 0.5;
                continue;
            };
            let Ok(rho) = rho_eval(sys, &projected, trial_period, energy, &opts.integration)
            else {
                lambda *= 0.5;
                continue;
            };
            if rho.norm < residual * (1.0 - 1e-4 * lambda) || rho.norm <= opts.tol {
                theta = projected;
                period = trial_period;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(TorusDynError::NoOrbit {
                iterations: iter + 1,
                residual,
            });
        }
    }

    Err(TorusDynError::NoOrbit {
        iterations: opts.max_iter,
        residual: last_residual,
    })
}

fn finish_orbit(
    sys: &MechanicalSystem,
    theta: &PhasePoint,
    period: f64,
    energy: f64,
    residual: f64,
    monodromy: SymplecticMatrix4,
) -> Result<PeriodicOrbit> {
    // winding from the unwrapped endpoint
    let tr = crate::flow::integrate_flow(sys, theta, period, &IntegrationOptions::default())?;
    let w1 = ((tr.y_end[0] - theta.x.x1) / crate::geom::TAU).round() as i32;
    let w2 = ((tr.y_end[1] - theta.x.x2) / crate::geom::TAU).round() as i32;
    Ok(PeriodicOrbit {
        initial: *theta,
        period,
        energy,
        residual,
        monodromy,
        winding: [w1, w2],
    })
}

/// Reduce an orbit's period to its minimal value by testing integer
/// divisors: T/n is accepted when the closure residual at T/n stays below
/// `tol`. Returns the reduced orbit (recomputed monodromy) and the divisor.
pub fn minimal_period(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    tol: f64,
    opts: &IntegrationOptions,
) -> Result<(PeriodicOrbit, u32)> {
    let mut best_n = 1u32;
    let max_n = (orbit.period / 1e-2).floor().min(64.0) as u32;
    for n in (2..=max_n).rev() {
        let t_sub = orbit.period / n as f64;
        let rho = rho_eval(sys, &orbit.initial, t_sub, orbit.energy, opts)?;
        if rho.norm <= tol {
            best_n = n;
            break;
        }
    }
    if best_n == 1 {
        return Ok((orbit.clone(), 1));
    }
    let t_min = orbit.period / best_n as f64;
    let run = integrate_variational(sys, &orbit.initial, t_min, opts)?;
    let rho = rho_eval(sys, &orbit.initial, t_min, orbit.energy, opts)?;
    let mut reduced = orbit.clone();
    reduced.period = t_min;
    reduced.residual = rho.norm;
    reduced.monodromy = run.monodromy();
    reduced.winding = [orbit.winding[0] / best_n as i32, orbit.winding[1] / best_n as i32];
    Ok((reduced, best_n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::TorusPoint;
    use approx::assert_relative_eq;

    #[test]
    fn rho_vanishes_on_free_particle_closed_geodesic() {
        let sys = MechanicalSystem::free_particle();
        // geodesic in x1 with p1 = 1 closes after 2π
        let z = PhasePoint::new(0.0, 0.0, 1.0, 0.0);
        let rho = rho_eval(
            &sys,
            &z,
            crate::geom::TAU,
            0.5,
            &IntegrationOptions::default(),
        )
        .unwrap();
        assert!(rho.norm < 1e-10, "rho = {:.3e}", rho.norm);
    }

    #[test]
    fn newton_recovers_free_particle_geodesic_from_rough_guess() {
        let sys = MechanicalSystem::free_particle();
        let guess = PhasePoint::new(0.1, 0.2, 0.9, 0.02);
        let orbit =
            find_periodic_orbit(&sys, &guess, 6.0, 0.5, &NewtonOptions::default()).unwrap();
        assert!(orbit.residual < 1e-10);
        assert_relative_eq!(orbit.period, crate::geom::TAU, epsilon = 1e-7);
        assert_relative_eq!(sys.hamiltonian(&orbit.initial), 0.5, epsilon = 1e-12);
        assert_eq!(orbit.winding, [1, 0]);
    }

    #[test]
    fn newton_finds_hyperbolic_pendulum_rotor_orbit() {
        let sys = MechanicalSystem::pendulum_rotor();
        // rotor orbit over the pendulum saddle: x1 = π, p2 = 1, T = 2π.
        // The guess is 5% off in momentum and period, displaced toward the
        // pendulum separatrix (multiplier e^{2π} ≈ 535 shrinks the basin in
        // the transverse-unstable direction).
        let guess = PhasePoint::new(std::f64::consts::PI + 0.05, 0.3, -0.05, 0.95);
        let orbit =
            find_periodic_orbit(&sys, &guess, 6.6, 1.5, &NewtonOptions::default()).unwrap();
        assert!(orbit.residual < 1e-10);
        assert_relative_eq!(orbit.period, crate::geom::TAU, epsilon = 1e-8);
        assert_relative_eq!(
            angle_diff(orbit.initial.x.x1, std::f64::consts::PI),
            0.0,
            epsilon = 1e-8
        );
        assert_relative_eq!(orbit.initial.p1, 0.0, epsilon = 1e-8);
        assert_relative_eq!(orbit.initial.p2, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn degenerate_guesses_are_rejected() {
        let sys = MechanicalSystem::pendulum_rotor();
        // energy below the potential at the guess point
        let z = PhasePoint {
            x: TorusPoint::new(std::f64::consts::PI, 0.0),
            p1: 0.1,
            p2: 0.1,
        };
        let err = project_to_level(&sys, &z, 0.5).unwrap_err();
        assert!(matches!(err, TorusDynError::DegenerateGuess { .. }));

        let err =
            find_periodic_orbit(&sys, &z, 1e-4, 1.5, &NewtonOptions::default()).unwrap_err();
        assert!(matches!(err, TorusDynError::DegenerateGuess { .. }));
    }

    #[test]
    fn minimal_period_reduces_a_doubled_orbit() {
        let sys = MechanicalSystem::free_particle();
        let guess = PhasePoint::new(0.0, 0.0, 1.0, 0.0);
        let orbit =
            find_periodic_orbit(&sys, &guess, 2.0 * crate::geom::TAU, 0.5, &NewtonOptions::default())
                .unwrap();
        // Newton may converge to the doubled period from this guess
        if (orbit.period - 2.0 * crate::geom::TAU).abs() < 1e-6 {
            let (reduced, n) =
                minimal_period(&sys, &orbit, 1e-8, &IntegrationOptions::default()).unwrap();
            assert_eq!(n, 2);
            assert_relative_eq!(reduced.period, crate::geom::TAU, epsilon = 1e-8);
        }
    }
}
