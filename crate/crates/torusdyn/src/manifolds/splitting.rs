//! Eigenstructure of the restricted return map at a hyperbolic orbit: the
//! expanding/contracting multipliers and their unit eigendirections in
//! section coordinates.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Result, TorusDynError};
use crate::orbits::{restricted_poincare, PeriodicOrbit};
use crate::systems::MechanicalSystem;

/// Which invariant manifold of a hyperbolic orbit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifoldSide {
    Stable,
    Unstable,
}

impl ManifoldSide {
    /// Time direction in which points on this side leave the orbit — the
    /// direction used to globalize a branch.
    pub fn grow_dir(self) -> f64 {
        match self {
            ManifoldSide::Stable => -1.0,
            ManifoldSide::Unstable => 1.0,
        }
    }

    /// Time direction in which points return toward the orbit — the
    /// direction of the invariance check.
    pub fn check_dir(self) -> f64 {
        -self.grow_dir()
    }
}

impl std::fmt::Display for ManifoldSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ManifoldSide::Stable => write!(f, "stable"),
            ManifoldSide::Unstable => write!(f, "unstable"),
        }
    }
}

/// Eigen-data of the restricted return map of a hyperbolic orbit.
#[derive(Clone, Debug)]
pub struct HyperbolicSplitting {
    /// Return-map differential in section coordinates.
    pub d_p: Matrix2<f64>,
    /// Expanding eigenvalue, |λ_u| > 1.
    pub lambda_u: f64,
    /// Contracting eigenvalue λ_s = det(dP)/λ_u.
    pub lambda_s: f64,
    /// Unit eigenvectors, oriented so the dominant component is positive.
    pub dir_u: Vector2<f64>,
    pub dir_s: Vector2<f64>,
}

impl HyperbolicSplitting {
    pub fn direction(&self, side: ManifoldSide) -> Vector2<f64> {
        match side {
            ManifoldSide::Stable => self.dir_s,
            ManifoldSide::Unstable => self.dir_u,
        }
    }

    /// Expansion factor per growth-map application along the given side
    /// (> 1 for both sides: the stable branch is grown backwards).
    pub fn growth_rate(&self, side: ManifoldSide) -> f64 {
        match side {
            ManifoldSide::Stable => 1.0 / self.lambda_s,
            ManifoldSide::Unstable => self.lambda_u,
        }
    }
}

/// Eigenvalues and eigenvectors of the transverse return map, with the
/// not-hyperbolic case rejected.
pub fn hyperbolic_splitting(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
) -> Result<HyperbolicSplitting> {
    let restricted = restricted_poincare(sys, &orbit.initial, &orbit.monodromy)?;
    splitting_of(&restricted.d_p)
}

/// Eigen-decomposition of an explicit 2×2 return-map differential.
pub(crate) fn splitting_of(d_p: &Matrix2<f64>) -> Result<HyperbolicSplitting> {
    let tr = d_p.trace();
    let det = d_p.determinant();
    let disc = tr * tr - 4.0 * det;
    if tr.abs() <= 2.0 || disc <= 0.0 {
        return Err(TorusDynError::NotHyperbolic {
            trace_abs: tr.abs(),
        });
    }
    let lambda_u = 0.5 * (tr + tr.signum() * disc.sqrt());
    let lambda_s = det / lambda_u;
    Ok(HyperbolicSplitting {
        d_p: *d_p,
        lambda_u,
        lambda_s,
        dir_u: unit_eigenvector(d_p, lambda_u),
        dir_s: unit_eigenvector(d_p, lambda_s),
    })
}

fn unit_eigenvector(a: &Matrix2<f64>, lambda: f64) -> Vector2<f64> {
    // null vectors of (A − λ) read off the two rows; keep the better
    // conditioned one
    let r1 = Vector2::new(a[(0, 1)], lambda - a[(0, 0)]);
    let r2 = Vector2::new(lambda - a[(1, 1)], a[(1, 0)]);
    let mut v = if r1.norm() >= r2.norm() { r1 } else { r2 };
    v /= v.norm();
    let lead = if v[0].abs() >= v[1].abs() { v[0] } else { v[1] };
    if lead < 0.0 {
        v = -v;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::PhasePoint;
    use crate::orbits::{find_periodic_orbit, NewtonOptions};

    fn rotor_orbit() -> (MechanicalSystem, PeriodicOrbit) {
        let sys = MechanicalSystem::pendulum_rotor();
        let guess = PhasePoint::new(std::f64::consts::PI, 0.0, 0.0, 1.0);
        let orbit =
            find_periodic_orbit(&sys, &guess, 6.3, 1.5, &NewtonOptions::default()).unwrap();
        (sys, orbit)
    }

    #[test]
    fn multipliers_match_the_exponential_rates_of_the_product_system() {
        let (sys, orbit) = rotor_orbit();
        let split = hyperbolic_splitting(&sys, &orbit).unwrap();
        // the transverse dynamics is the pendulum saddle: multipliers e^{±T}
        let expect = (2.0 * std::f64::consts::PI).exp();
        assert!((split.lambda_u - expect).abs() < 1e-4 * expect);
        assert!((split.lambda_s - 1.0 / expect).abs() < 1e-4 / expect);
        assert!((split.lambda_u * split.lambda_s - 1.0).abs() < 1e-6);
        assert!((split.dir_u.norm() - 1.0).abs() < 1e-12);
        assert!((split.dir_s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvectors_are_invariant_directions_of_the_return_map() {
        let (sys, orbit) = rotor_orbit();
        let split = hyperbolic_splitting(&sys, &orbit).unwrap();
        let ru = split.d_p * split.dir_u - split.lambda_u * split.dir_u;
        let rs = split.d_p * split.dir_s - split.lambda_s * split.dir_s;
        assert!(ru.norm() < 1e-8 * split.lambda_u.abs());
        assert!(rs.norm() < 1e-8);
    }

    #[test]
    fn synthetic_diagonal_map_returns_exact_eigenpairs() {
        let d_p = Matrix2::new(2.0, 0.0, 0.0, 0.5);
        let split = splitting_of(&d_p).unwrap();
        assert_eq!(split.lambda_u, 2.0);
        assert_eq!(split.lambda_s, 0.5);
        assert_eq!(split.dir_u, Vector2::new(1.0, 0.0));
        assert_eq!(split.dir_s, Vector2::new(0.0, 1.0));
    }

    #[test]
    fn rotations_are_rejected_as_not_hyperbolic() {
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let d_p = Matrix2::new(c, -s, s, c);
        match splitting_of(&d_p) {
            Err(TorusDynError::NotHyperbolic { trace_abs }) => assert!(trace_abs < 2.0),
            other => panic!("expected not-hyperbolic error, got {other:?}"),
        }
    }
}
