//! Regularity of an energy level: the gradient of H never vanishes on a
//! regular level, and the critical values of H are exactly the critical
//! values of the potential (critical points force p = 0 by convexity of
//! the kinetic term).

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::{PhasePoint, TorusPoint, TAU};
use crate::systems::MechanicalSystem;

/// Verdict on one energy level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularLevelReport {
    pub energy: f64,
    pub regular: bool,
    /// Smallest ‖∇H‖ seen over the sampled level set.
    pub min_gradient_norm: f64,
    /// Critical values of the potential (= critical values of H).
    pub critical_values: Vec<f64>,
    /// Distance from the energy to the nearest critical value.
    pub critical_gap: f64,
    /// Suggested energy shift onto the midpoint between the two critical
    /// values bracketing k; zero when the level is already regular.
    pub suggested_delta: f64,
}

/// Locate the critical points of the potential by grid seeding and Newton
/// polish on ∇U = 0, then cluster the resulting critical values.
fn critical_values(sys: &MechanicalSystem, grid: usize) -> Vec<f64> {
    let n = grid.max(8);
    let mut values: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let mut x = Vector2::new(TAU * i as f64 / n as f64, TAU * j as f64 / n as f64);
            // Newton iterations on the potential gradient
            let mut converged = false;
            for _ in 0..40 {
                let jet = sys.potential_jet(TorusPoint::new(x[0], x[1]), 2);
                let g = Vector2::new(jet.deriv(1, 0), jet.deriv(0, 1));
                if g.norm() < 1e-12 {
                    converged = true;
                    break;
                }
                let h = Matrix2::new(
                    jet.deriv(2, 0),
                    jet.deriv(1, 1),
                    jet.deriv(1, 1),
                    jet.deriv(0, 2),
                );
                // Levenberg step (HᵀH + λI)⁻¹ H g survives the singular
                // Hessians of critical circles
                let lambda = 1e-12 * (1.0 + h.norm_squared());
                let lhs = h.transpose() * h + Matrix2::identity() * lambda;
                let Some(inv) = lhs.try_inverse() else { break };
                let step = inv * (h.transpose() * g);
                if step.norm() > 2.0 || step.norm() < 1e-15 {
                    break; // out of the basin, or stuck at a nonzero plateau
                }
                x -= step;
            }
            if converged {
                values.push(sys.potential(TorusPoint::new(x[0], x[1]).wrap()));
            }
        }
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup_by(|a, b| (*a - *b).abs() < 1e-8);
    values
}

/// Sample the level set over each grid position by bisecting along
/// momentum rays, and measure ∇H there.
pub fn regular_level_check(
    sys: &MechanicalSystem,
    energy: f64,
    grid_density: usize,
) -> Result<RegularLevelReport> {
    let n = grid_density.max(8);
    let mut min_grad = f64::INFINITY;

    for i in 0..n {
        for j in 0..n {
            let x = TorusPoint::new(TAU * i as f64 / n as f64, TAU * j as f64 / n as f64);
            let u = sys.potential(x);
            if u >= energy {
                continue;
            }
            let gi = sys.metric_inverse(x);
            // smallest kinetic eigenvalue gives an upper bracket for the
            // momentum magnitude on the level
            let tr = gi.trace();
            let det = gi.determinant();
            let lam_min = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
            let s_hi = (2.0 * (energy - u) / lam_min.max(1e-12)).sqrt() * 1.1 + 1e-6;
            for a in 0..8 {
                let phi = TAU * a as f64 / 8.0;
                let dir = Vector2::new(phi.cos(), phi.sin());
                // bisection on H(x, s·dir) − k, increasing in s
                let f = |s: f64| {
                    let p = dir * s;
                    sys.hamiltonian(&PhasePoint {
                        x,
                        p1: p[0],
                        p2: p[1],
                    }) - energy
                };
                let (mut lo, mut hi) = (0.0, s_hi);
                if f(lo) > 0.0 || f(hi) < 0.0 {
                    continue;
                }
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) <= 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let s = 0.5 * (lo + hi);
                let z = PhasePoint {
                    x,
                    p1: dir[0] * s,
                    p2: dir[1] * s,
                };
                min_grad = min_grad.min(sys.grad(&z).norm());
            }
        }
    }

    let crit = critical_values(sys, n.max(12));
    let critical_gap = crit
        .iter()
        .map(|v| (v - energy).abs())
        .fold(f64::INFINITY, f64::min);
    let regular = critical_gap > 1e-5 && min_grad > 1e-5;

    let suggested_delta = if regular {
        0.0
    } else {
        // midpoints between consecutive critical values, plus one beyond
        // each end of the spectrum
        let mut candidates: Vec<f64> = Vec::new();
        for w in crit.windows(2) {
            candidates.push(0.5 * (w[0] + w[1]));
        }
        if let (Some(first), Some(last)) = (crit.first(), crit.last()) {
            let span = (last - first).max(1.0);
            candidates.push(first - 0.1 * span);
            candidates.push(last + 0.1 * span);
        }
        candidates
            .into_iter()
            .map(|v| v - energy)
            .min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap_or(0.0)
    };

    Ok(RegularLevelReport {
        energy,
        regular,
        min_gradient_norm: if min_grad.is_finite() { min_grad } else { 0.0 },
        critical_values: crit,
        critical_gap,
        suggested_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pendulum_rotor_critical_values_are_plus_minus_one() {
        let sys = MechanicalSystem::pendulum_rotor();
        let crit = critical_values(&sys, 12);
        assert_eq!(crit.len(), 2);
        assert!((crit[0] + 1.0).abs() < 1e-10);
        assert!((crit[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn regular_level_reports_no_shift() {
        let sys = MechanicalSystem::pendulum_rotor();
        let rep = regular_level_check(&sys, 1.5, 10).unwrap();
        assert!(rep.regular);
        assert_eq!(rep.suggested_delta, 0.0);
        assert!(rep.min_gradient_norm > 0.1);
        assert!((rep.critical_gap - 0.5).abs() < 1e-8);
    }

    #[test]
    fn critical_level_suggests_moving_to_a_midpoint() {
        let sys = MechanicalSystem::pendulum_rotor();
        // k = 1 is the saddle value of U
        let rep = regular_level_check(&sys, 1.0, 10).unwrap();
        assert!(!rep.regular);
        assert!(rep.suggested_delta.abs() > 0.1);
        // midpoint of {−1, 1} is 0 → shift −1; or beyond the top: 1.2 → +0.2
        let target = rep.energy + rep.suggested_delta;
        let dist_to_crit = rep
            .critical_values
            .iter()
            .map(|v| (v - target).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(dist_to_crit > 0.15);
    }
}
