//! Manifold steering end to end: check that the graph's support clears
//! both orbits, build the level-restoring potential for the tilted graph,
//! re-grow the unstable branch under the perturbed flow, and compare its
//! crossings with the reference stable branch before and after the edit.

use crate::error::{Result, TorusDynError};
use crate::flow::{integrate_flow, phase_at, IntegrationOptions};
use crate::orbits::PeriodicOrbit;
use crate::systems::{MechanicalSystem, PerturbationTerm};

use super::branch::{grow_local_manifold, GrowOptions, ManifoldBranch};
use super::crossing::{find_heteroclinic, HeteroclinicRecord};
use super::graph::{graph_potential, LagrangianGraph};
use super::splitting::ManifoldSide;

/// Clearance required between the support ball and the orbits.
const SUPPORT_MARGIN: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct SplitOptions {
    /// Transversality threshold for the crossing search.
    pub tol_angle: f64,
    /// Section arclength to which the branches are grown.
    pub grow_radius: f64,
    /// First-iterate linearity tolerance for branch seeding.
    pub seed_tol: f64,
    /// Collar residual allowance for the level-restoring potential.
    pub blend_tol: f64,
    /// Sheet selectors for the unstable and stable branches.
    pub u_sign: f64,
    pub s_sign: f64,
    pub grow: GrowOptions,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            tol_angle: 1e-4,
            grow_radius: 6.0,
            seed_tol: 1e-8,
            blend_tol: 1e-6,
            u_sign: 1.0,
            s_sign: 1.0,
            grow: GrowOptions::default(),
        }
    }
}

/// Everything `split_manifolds` measured, plus the curves themselves.
#[derive(Clone, Debug)]
pub struct SplitReport {
    /// The potential that was added (zero-scaled when the tilt is 0).
    pub term: PerturbationTerm,
    /// Crossings of the unperturbed branches.
    pub before: Vec<HeteroclinicRecord>,
    /// Crossings of the re-grown unstable branch with the reference
    /// stable branch.
    pub after: Vec<HeteroclinicRecord>,
    /// Orbit closure defects under the perturbed flow, unstable side
    /// first: the edit must leave both orbits untouched.
    pub persistence: [f64; 2],
    /// Largest crossing angles before and after.
    pub best_before: f64,
    pub best_after: f64,
    pub unstable_before: ManifoldBranch,
    pub unstable_after: ManifoldBranch,
    pub stable_reference: ManifoldBranch,
}

fn orbit_clearance(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    graph: &LagrangianGraph,
    opts: &IntegrationOptions,
) -> Result<f64> {
    let tr = integrate_flow(sys, &orbit.initial, orbit.period, opts)?;
    let mut min_d = f64::INFINITY;
    for i in 0..=256 {
        let z = phase_at(&tr, orbit.period * i as f64 / 256.0);
        min_d = min_d.min(z.x.wrap().dist(graph.center));
    }
    Ok(min_d)
}

fn closure_defect(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    opts: &IntegrationOptions,
) -> Result<f64> {
    let tr = integrate_flow(sys, &orbit.initial, orbit.period, opts)?;
    Ok(phase_at(&tr, orbit.period).wrap().dist(orbit.initial.wrap()))
}

/// Steer the unstable manifold of `orbit_u` across the stable curve of
/// `orbit_s` by tilting a Lagrangian graph and compensating the energy
/// level over it.
///
/// The edit is localized: its support ball must clear both orbits, so the
/// orbits, their monodromies, and the section survive unchanged (checked
/// and reported as `persistence`). The unstable branch feels the edit
/// through its backward-time dependence and is re-grown under the
/// perturbed flow; the stable branch is grown once in the unperturbed
/// system and kept as the comparison reference, since the forward-time
/// dynamics that defines it is unchanged away from the edited disc.
/// A tilt of exactly 0 adds a zero-scaled term, reproducing the
/// unperturbed crossings bit for bit.
pub fn split_manifolds(
    sys: &MechanicalSystem,
    orbit_u: &PeriodicOrbit,
    orbit_s: &PeriodicOrbit,
    k: f64,
    graph: &LagrangianGraph,
    tilt: f64,
    opts: &SplitOptions,
) -> Result<SplitReport> {
    for (name, orbit) in [("unstable", orbit_u), ("stable", orbit_s)] {
        if (orbit.energy - k).abs() > 1e-9 {
            return Err(TorusDynError::invalid(format!(
                "{name}-side orbit sits at energy {} instead of the level {k}",
                orbit.energy
            )));
        }
        let clearance = orbit_clearance(sys, orbit, graph, &opts.grow.integration)?;
        if clearance <= graph.r_u + SUPPORT_MARGIN {
            return Err(TorusDynError::invalid(format!(
                "perturbation support (radius {:.3}) reaches within {clearance:.3} of the \
                 {name}-side orbit configuration",
                graph.r_u
            )));
        }
    }

    let tilted = graph.tilted(tilt);
    let term = graph_potential(sys, &tilted, k, opts.blend_tol)?;
    let term = if tilt == 0.0 {
        term.with_scale(0.0)
    } else {
        term
    };

    let unstable_before = grow_local_manifold(
        sys,
        orbit_u,
        ManifoldSide::Unstable,
        opts.u_sign,
        opts.grow_radius,
        opts.seed_tol,
        &opts.grow,
    )?;
    let stable_reference = grow_local_manifold(
        sys,
        orbit_s,
        ManifoldSide::Stable,
        opts.s_sign,
        opts.grow_radius,
        opts.seed_tol,
        &opts.grow,
    )?;
    let before = find_heteroclinic(sys, &unstable_before, &stable_reference, opts.tol_angle)?;

    let perturbed = sys.add_potential(term.clone());
    let persistence = [
        closure_defect(&perturbed, orbit_u, &opts.grow.integration)?,
        closure_defect(&perturbed, orbit_s, &opts.grow.integration)?,
    ];
    let unstable_after = grow_local_manifold(
        &perturbed,
        orbit_u,
        ManifoldSide::Unstable,
        opts.u_sign,
        opts.grow_radius,
        opts.seed_tol,
        &opts.grow,
    )?;
    let after = find_heteroclinic(&perturbed, &unstable_after, &stable_reference, opts.tol_angle)?;

    let best = |recs: &[HeteroclinicRecord]| recs.iter().map(|r| r.angle).fold(0.0, f64::max);
    Ok(SplitReport {
        term,
        best_before: best(&before),
        best_after: best(&after),
        before,
        after,
        persistence,
        unstable_before,
        unstable_after,
        stable_reference,
    })
}
