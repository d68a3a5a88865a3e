//! Focal (twist) times along a trajectory: zeros of the determinant of the
//! configuration projection of the transported vertical plane. At a focal
//! time the linearized flow fails to be transverse to the vertical fibers,
//! which is exactly where orbit-adapted charts break down.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::{brentq, integrate_variational_with_inverse, IntegrationOptions};
use crate::geom::PhasePoint;
use crate::systems::MechanicalSystem;

/// Zeros and degenerate stretches of the vertical-projection determinant
/// g(t) = det(∂x Φ_t |vertical).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwistReport {
    /// Isolated zeros of g on (0, t_max], including even-order touches.
    pub roots: Vec<f64>,
    /// Intervals where g stays below the detection floor — the
    /// discrete-root picture does not apply there.
    pub non_discrete_intervals: Vec<(f64, f64)>,
    /// Sampled minimum of |g| outside the reported roots.
    pub floor: f64,
}

/// Compute g(t) over (0, t_max] and extract its zeros. Sign changes are
/// refined by Brent's method; even-multiplicity roots are caught as local
/// minima of |g| dipping below `tol_root`; runs of consecutive samples
/// below the floor are flagged as non-discrete intervals.
pub fn twist_times(
    sys: &MechanicalSystem,
    z0: &PhasePoint,
    t_max: f64,
    tol_root: f64,
    opts: &IntegrationOptions,
) -> Result<TwistReport> {
    let run = integrate_variational_with_inverse(sys, z0, t_max, opts)?;
    let g = |t: f64| -> f64 {
        let m = run.transition(t);
        // columns Φ_t e3, Φ_t e4; top 2×2 block determinant
        m[(0, 2)] * m[(1, 3)] - m[(0, 3)] * m[(1, 2)]
    };

    let n = 2000usize;
    let ts: Vec<f64> = (0..=n).map(|i| t_max * i as f64 / n as f64).collect();
    let gs: Vec<f64> = ts.iter().map(|&t| g(t)).collect();

    // scale detection thresholds by the typical size of g
    let gmax = gs.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let floor_tol = tol_root * gmax.max(1e-300);

    let mut roots: Vec<f64> = Vec::new();
    let mut plateaus: Vec<(f64, f64)> = Vec::new();
    let mut plateau_start: Option<usize> = None;

    for i in 1..=n {
        // plateau bookkeeping (skip the forced zero at t = 0)
        let below = gs[i].abs() < floor_tol;
        match (below, plateau_start) {
            (true, None) => plateau_start = Some(i),
            (false, Some(s)) => {
                if i - s >= 20 {
                    plateaus.push((ts[s], ts[i - 1]));
                }
                plateau_start = None;
            }
            _ => {}
        }

        if gs[i - 1] * gs[i] < 0.0 {
            if let Some(r) = brentq(&g, ts[i - 1], ts[i], 1e-14, 1e-14, 200) {
                roots.push(r);
            }
        } else if i >= 2
            && gs[i - 1].abs() < gs[i - 2].abs()
            && gs[i - 1].abs() <= gs[i].abs()
            && gs[i - 1].abs() < 0.01 * gmax
        {
            // dip in |g| without a sign change: candidate even-order root;
            // refine first, accept only if the refined minimum reaches the
            // floor (plateau interiors are filtered out afterwards)
            let r = refine_minimum(&g, ts[i - 2], ts[i - 1], ts[i]);
            if g(r).abs() < floor_tol {
                roots.push(r);
            }
        }
    }
    if let Some(s) = plateau_start {
        if n + 1 - s >= 20 {
            plateaus.push((ts[s], ts[n]));
        }
    }

    // drop roots swallowed by plateaus and collapse near-duplicates
    roots.retain(|r| {
        !plateaus
            .iter()
            .any(|&(a, b)| *r > a - 1e-9 && *r < b + 1e-9)
    });
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() < 2.0 * t_max / n as f64);
    roots.retain(|&r| r > 1e-9);

    let floor = gs
        .iter()
        .zip(&ts)
        .filter(|(_, &t)| {
            t > 1e-9 && !roots.iter().any(|&r| (t - r).abs() < 2.0 * t_max / n as f64)
        })
        .map(|(v, _)| v.abs())
        .fold(f64::INFINITY, f64::min);

    Ok(TwistReport {
        roots,
        non_discrete_intervals: plateaus,
        floor,
    })
}

/// Parabolic refinement of a minimum of |g| bracketed by three samples.
fn refine_minimum(g: &dyn Fn(f64) -> f64, a: f64, b: f64, c: f64) -> f64 {
    let (mut a, mut b, mut c) = (a, b, c);
    for _ in 0..60 {
        let fa = g(a).abs();
        let fb = g(b).abs();
        let fc = g(c).abs();
        // vertex of the parabola through the three points
        let denom = (b - a) * (fb - fc) - (b - c) * (fb - fa);
        let mut x = if denom.abs() < 1e-300 {
            0.5 * (a + c)
        } else {
            b - 0.5 * ((b - a).powi(2) * (fb - fc) - (b - c).powi(2) * (fb - fa)) / denom
        };
        if !(a..=c).contains(&x) {
            x = 0.5 * (a + c);
        }
        let fx = g(x).abs();
        if fx <= fb {
            if x < b {
                c = b;
            } else {
                a = b;
            }
            b = x;
        } else if x < b {
            a = x;
        } else {
            c = x;
        }
        if c - a < 1e-12 {
            break;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn isotropic_oscillator_has_even_roots_at_multiples_of_pi() {
        // U = (1 − cos x1) + (1 − cos x2) linearizes at the origin to two
        // unit oscillators: g(t) = sin²t, roots kπ of even order
        let sys = crate::systems::MechanicalSystem::new(
            crate::systems::MetricInverse::euclidean(),
            crate::systems::TrigPoly::new(
                2.0,
                vec![
                    crate::systems::TrigTerm::cos(-1.0, 1, 0),
                    crate::systems::TrigTerm::cos(-1.0, 0, 1),
                ],
            ),
        );
        let z0 = PhasePoint::new(0.0, 0.0, 0.0, 0.0);
        let rep = twist_times(&sys, &z0, 7.0, 1e-6, &IntegrationOptions::default()).unwrap();
        assert!(
            rep.non_discrete_intervals.is_empty(),
            "unexpected plateaus {:?}",
            rep.non_discrete_intervals
        );
        assert_eq!(rep.roots.len(), 2, "roots {:?}", rep.roots);
        assert!((rep.roots[0] - PI).abs() < 1e-5, "roots {:?}", rep.roots);
        assert!((rep.roots[1] - 2.0 * PI).abs() < 1e-5, "roots {:?}", rep.roots);
    }

    #[test]
    fn free_particle_has_no_positive_twist_roots() {
        let sys = crate::systems::MechanicalSystem::free_particle();
        let z0 = PhasePoint::new(0.0, 0.0, 1.0, 0.0);
        let rep = twist_times(&sys, &z0, 5.0, 1e-6, &IntegrationOptions::default()).unwrap();
        // g(t) = t² only touches zero at t = 0, which is excluded
        assert!(rep.roots.is_empty(), "roots {:?}", rep.roots);
        assert!(rep.non_discrete_intervals.is_empty());
    }
}
