//! Grid scan for short periodic orbits on one energy level: seeded Newton
//! solves over a position × direction × period-ladder grid, in parallel,
//! followed by duplicate removal in a point-to-curve orbit metric.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::{integrate_flow, IntegrationOptions};
use crate::geom::{PhasePoint, TorusPoint, TAU};
use crate::systems::MechanicalSystem;

use super::{find_periodic_orbit, minimal_period, project_to_level, NewtonOptions, PeriodicOrbit};

/// Scan controls. `grid_density` is the number of seed positions per torus
/// axis; the number of momentum directions per position grows with it but
/// never drops below four.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScanOptions {
    pub grid_density: usize,
    /// Longest period searched; the seed ladder divides it linearly.
    pub t_max: f64,
    /// Orbits closer than this in the orbit metric are duplicates.
    pub dedup_tol: f64,
    /// 0 leaves the grid unjittered; any other value shifts seeds by a
    /// deterministic pseudorandom fraction of a cell.
    pub seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            grid_density: 3,
            t_max: 15.0,
            dedup_tol: 1e-4,
            seed: 0,
        }
    }
}

/// Outcome of a scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanResult {
    pub orbits: Vec<PeriodicOrbit>,
    /// Smallest period among the orbits found — an empirical estimate of
    /// the shortest period on the level, not a certified bound.
    pub empirical_min_period: Option<f64>,
    pub n_seeds: usize,
    pub n_converged: usize,
    pub n_duplicates_removed: usize,
}

/// Distance between two orbits as closed curves: the larger of the two
/// point-to-curve distances from each orbit's base point to the other
/// orbit. Distinct orbits on one energy level are disjoint closed curves,
/// so a near-zero value identifies the same orbit regardless of where the
/// two parametrizations start.
pub fn orbit_distance(
    sys: &MechanicalSystem,
    a: &PeriodicOrbit,
    b: &PeriodicOrbit,
    opts: &IntegrationOptions,
) -> Result<f64> {
    let d_ab = point_to_orbit(sys, &a.initial, b, opts)?;
    let d_ba = point_to_orbit(sys, &b.initial, a, opts)?;
    Ok(d_ab.max(d_ba))
}

/// Distance from a phase point to an orbit curve: coarse scan of the dense
/// trajectory, then golden-section refinement around the best sample.
fn point_to_orbit(
    sys: &MechanicalSystem,
    q: &PhasePoint,
    orbit: &PeriodicOrbit,
    opts: &IntegrationOptions,
) -> Result<f64> {
    const N: usize = 256;
    let tr = integrate_flow(sys, &orbit.initial, orbit.period, opts)?;
    let qw = q.wrap();
    let dist_at = |t: f64| {
        let y = tr.eval(t);
        PhasePoint::new(y[0], y[1], y[2], y[3]).wrap().dist(qw)
    };
    let dt = orbit.period / N as f64;
    let mut best = f64::INFINITY;
    let mut best_i = 0;
    for i in 0..=N {
        let d = dist_at(dt * i as f64);
        if d < best {
            best = d;
            best_i = i;
        }
    }
    let refined = golden_min(&dist_at, dt * (best_i as f64 - 1.0).max(0.0), {
        dt * (best_i as f64 + 1.0).min(N as f64)
    });
    // the curve is periodic, so a minimum hugging one end also lives at the
    // other end; check the opposite bracket when the best sample is extremal
    let wrapped = if best_i == 0 {
        golden_min(&dist_at, orbit.period - dt, orbit.period)
    } else if best_i == N {
        golden_min(&dist_at, 0.0, dt)
    } else {
        f64::INFINITY
    };
    Ok(refined.min(wrapped))
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..48 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

/// Scan the level H = k for periodic orbits with period ≤ t_max.
pub fn scan_short_orbits(
    sys: &MechanicalSystem,
    energy: f64,
    scan: &ScanOptions,
    newton: &NewtonOptions,
) -> Result<ScanResult> {
    let n_x = scan.grid_density.max(1);
    let n_angles = (4 * scan.grid_density).max(4);
    let ladder: Vec<f64> = (0..4).map(|j| scan.t_max * (j + 1) as f64 / 4.0).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(scan.seed);
    let cell = TAU / n_x as f64;
    let mut seeds: Vec<(PhasePoint, f64)> = Vec::new();
    for i in 0..n_x {
        for j in 0..n_x {
            let (dx1, dx2) = if scan.seed == 0 {
                (0.0, 0.0)
            } else {
                (
                    rng.gen_range(-0.2..0.2) * cell,
                    rng.gen_range(-0.2..0.2) * cell,
                )
            };
            let x = TorusPoint::new(cell * i as f64 + dx1, cell * j as f64 + dx2).wrap();
            if sys.potential(x) >= energy {
                continue; // no level points over this position
            }
            for a in 0..n_angles {
                let phi = TAU * a as f64 / n_angles as f64;
                let dir = PhasePoint {
                    x,
                    p1: phi.cos(),
                    p2: phi.sin(),
                };
                let Ok(z) = project_to_level(sys, &dir, energy) else {
                    continue;
                };
                for &t in &ladder {
                    seeds.push((z, t));
                }
            }
        }
    }
    let n_seeds = seeds.len();

    let mut found: Vec<PeriodicOrbit> = seeds
        .par_iter()
        .filter_map(|(z, t)| {
            let orbit = find_periodic_orbit(sys, z, *t, energy, newton).ok()?;
            if orbit.period > scan.t_max * 1.05 {
                return None;
            }
            let (reduced, _) =
                minimal_period(sys, &orbit, 1e-8, &newton.integration).ok()?;
            Some(reduced)
        })
        .collect();
    let n_converged = found.len();

    // deterministic order before dedup so parallel scheduling cannot change
    // which representative survives
    found.sort_by(|a, b| {
        (a.period, a.initial.x.x1, a.initial.x.x2, a.initial.p1, a.initial.p2)
            .partial_cmp(&(
                b.period,
                b.initial.x.x1,
                b.initial.x.x2,
                b.initial.p1,
                b.initial.p2,
            ))
            .unwrap()
    });

    let mut unique: Vec<PeriodicOrbit> = Vec::new();
    'next: for orbit in found {
        for kept in &unique {
            if (kept.period - orbit.period).abs() < 0.05 * kept.period.max(orbit.period)
                && orbit_distance(sys, kept, &orbit, &newton.integration)? < scan.dedup_tol
            {
                continue 'next;
            }
        }
        unique.push(orbit);
    }
    let n_duplicates_removed = n_converged - unique.len();

    let empirical_min_period = unique.iter().map(|o| o.period).reduce(f64::min);

    Ok(ScanResult {
        orbits: unique,
        empirical_min_period,
        n_seeds,
        n_converged,
        n_duplicates_removed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_particle_scan_finds_axis_geodesics() {
        let sys = MechanicalSystem::free_particle();
        let scan = ScanOptions {
            grid_density: 1,
            t_max: 8.0,
            ..Default::default()
        };
        let result = scan_short_orbits(&sys, 0.5, &scan, &NewtonOptions::default()).unwrap();
        // the four axis directions give two distinct geodesic circles
        // (opposite directions are distinct orbits in phase space)
        assert!(
            result.orbits.len() >= 2,
            "found {} orbits",
            result.orbits.len()
        );
        for orbit in &result.orbits {
            assert!((orbit.period - TAU).abs() < 1e-6);
        }
        assert!((result.empirical_min_period.unwrap() - TAU).abs() < 1e-6);
        assert!(result.n_duplicates_removed > 0);
    }

    #[test]
    fn duplicate_detection_identifies_time_shifted_starts() {
        let sys = MechanicalSystem::free_particle();
        let a = find_periodic_orbit(
            &sys,
            &PhasePoint::new(0.0, 0.0, 1.0, 0.0),
            6.0,
            0.5,
            &NewtonOptions::default(),
        )
        .unwrap();
        let b = find_periodic_orbit(
            &sys,
            &PhasePoint::new(2.0, 0.0, 1.0, 0.0),
            6.0,
            0.5,
            &NewtonOptions::default(),
        )
        .unwrap();
        let d = orbit_distance(&sys, &a, &b, &IntegrationOptions::default()).unwrap();
        assert!(d < 1e-8, "distance {d:.3e}");
        // a different parallel geodesic is far away
        let c = find_periodic_orbit(
            &sys,
            &PhasePoint::new(0.0, 3.0, 1.0, 0.0),
            6.0,
            0.5,
            &NewtonOptions::default(),
        )
        .unwrap();
        let d2 = orbit_distance(&sys, &a, &c, &IntegrationOptions::default()).unwrap();
        assert!(d2 > 1.0, "distance {d2:.3e}");
    }
}
