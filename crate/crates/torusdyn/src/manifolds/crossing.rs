//! Intersections of two manifold curves on a shared section: a parallel
//! segment-pair sweep locates candidate crossings, a 2×2 Newton iteration
//! on local cubic models refines the curve parameters, and the crossing
//! angle is read off the matched-location tangents.

use nalgebra::{Matrix2, Vector2, Vector4};
use rayon::prelude::*;

use crate::error::{Result, TorusDynError};
use crate::geom::{PhasePoint, TAU};
use crate::systems::MechanicalSystem;

use super::branch::{dist_to_polyline, ManifoldBranch};

/// A located intersection of an unstable and a stable manifold curve.
#[derive(Clone, Debug)]
pub struct HeteroclinicRecord {
    /// Section coordinates of the crossing (on both polylines).
    pub point: Vector2<f64>,
    /// Phase-space point realizing the crossing on the section.
    pub state: PhasePoint,
    /// Unit tangent of the unstable curve at the crossing.
    pub tangent_u: Vector2<f64>,
    /// Unit tangent of the stable curve at the crossing.
    pub tangent_s: Vector2<f64>,
    /// Crossing angle in [0, π/2].
    pub angle: f64,
    /// Whether the angle clears the transversality threshold.
    pub transversal: bool,
    /// Arclength along the unstable curve.
    pub arc_u: f64,
    /// Arclength along the stable curve.
    pub arc_s: f64,
    /// Distance between the two refined curve points: how well the curves
    /// actually meet, beyond the polyline discretization.
    pub separation: f64,
}

/// Cubic through four consecutive vertices in Newton divided-difference
/// form, parametrized by the polyline arclength, so uneven vertex spacing
/// (as left by adaptive refinement) does not distort the tangent.
struct LocalCurve {
    t: [f64; 4],
    d: [Vector2<f64>; 4],
}

impl LocalCurve {
    /// Returns None when two of the four support nodes coincide.
    fn new(
        points: &[Vector2<f64>],
        arcs: &[f64],
        seg: usize,
        shift: Vector2<f64>,
    ) -> Option<LocalCurve> {
        let b = seg.saturating_sub(1).min(points.len() - 4);
        let p = &points[b..b + 4];
        let t = [arcs[b], arcs[b + 1], arcs[b + 2], arcs[b + 3]];
        if t.windows(2).any(|w| w[1] - w[0] < 1e-12) {
            return None;
        }
        let f01 = (p[1] - p[0]) / (t[1] - t[0]);
        let f12 = (p[2] - p[1]) / (t[2] - t[1]);
        let f23 = (p[3] - p[2]) / (t[3] - t[2]);
        let f012 = (f12 - f01) / (t[2] - t[0]);
        let f123 = (f23 - f12) / (t[3] - t[1]);
        let f0123 = (f123 - f012) / (t[3] - t[0]);
        Some(LocalCurve {
            t,
            d: [p[0] + shift, f01, f012, f0123],
        })
    }

    fn eval(&self, s: f64) -> Vector2<f64> {
        self.d[0]
            + (s - self.t[0])
                * (self.d[1] + (s - self.t[1]) * (self.d[2] + (s - self.t[2]) * self.d[3]))
    }

    fn deriv(&self, s: f64) -> Vector2<f64> {
        let (t0, t1, t2) = (self.t[0], self.t[1], self.t[2]);
        self.d[1]
            + (2.0 * s - t0 - t1) * self.d[2]
            + ((s - t1) * (s - t2) + (s - t0) * (s - t2) + (s - t0) * (s - t1)) * self.d[3]
    }

    /// Parameter window the model may be evaluated in: the support span
    /// plus a quarter of the adjacent spacing on each end.
    fn window(&self) -> (f64, f64) {
        (
            self.t[0] - 0.25 * (self.t[1] - self.t[0]),
            self.t[3] + 0.25 * (self.t[3] - self.t[2]),
        )
    }
}

fn unit_angle(tu: &Vector2<f64>, ts: &Vector2<f64>) -> (Vector2<f64>, Vector2<f64>, f64) {
    let nu = tu.normalize();
    let ns = ts.normalize();
    (nu, ns, nu.dot(&ns).abs().clamp(0.0, 1.0).acos())
}

/// Chart translations under which the stable polyline must be compared with
/// the unstable one. Section coordinates live on the covering plane of the
/// torus angles, so one physical curve reappears shifted by the frame
/// projections of the 2π angle translations; only translates whose bounding
/// box comes near the unstable curve are kept. The zero shift is always
/// present and sorts first.
fn deck_shifts(branch_u: &ManifoldBranch, branch_s: &ManifoldBranch) -> Vec<Vector2<f64>> {
    let frame = &branch_u.section.frame;
    let c1 = frame.coords(&Vector4::new(TAU, 0.0, 0.0, 0.0));
    let c2 = frame.coords(&Vector4::new(0.0, TAU, 0.0, 0.0));
    let v1 = Vector2::new(c1[1], c1[3]);
    let v2 = Vector2::new(c2[1], c2[3]);
    let bbox = |pts: &[Vector2<f64>]| {
        let mut lo = Vector2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    };
    let (ulo, uhi) = bbox(&branch_u.points);
    let (slo, shi) = bbox(&branch_s.points);
    const MARGIN: f64 = 0.1;
    let mut shifts: Vec<Vector2<f64>> = vec![Vector2::zeros()];
    for k in -3i32..=3 {
        for m in -3i32..=3 {
            let v = (k as f64) * v1 + (m as f64) * v2;
            if shifts.iter().any(|w| (w - v).norm() < 1e-9) {
                continue;
            }
            let lo = slo + v;
            let hi = shi + v;
            if lo[0] <= uhi[0] + MARGIN
                && hi[0] >= ulo[0] - MARGIN
                && lo[1] <= uhi[1] + MARGIN
                && hi[1] >= ulo[1] - MARGIN
            {
                shifts.push(v);
            }
        }
    }
    shifts.sort_by(|a, b| {
        a.norm()
            .total_cmp(&b.norm())
            .then(a[0].total_cmp(&b[0]))
            .then(a[1].total_cmp(&b[1]))
    });
    shifts
}

/// Intersect the unstable and stable curves of two branches grown on the
/// same section.
///
/// Candidates come from an exhaustive segment-pair sweep (parallel over the
/// unstable polyline) run against every nearby chart translate of the
/// stable curve, so crossings are found even when the two polylines wind
/// onto different sheets of the covering plane. Each candidate is refined
/// by Newton on local cubic models of both curves, which supplies the
/// tangents, arclengths, and the residual separation of the refined curve
/// points. The reported crossing point is the segment-level intersection,
/// so it lies on the unstable polyline and a translate of the stable one
/// exactly. The crossing at the orbit point itself is excluded. Records are
/// sorted by unstable arclength, deduplicated, and capped at 128.
pub fn find_heteroclinic(
    sys: &MechanicalSystem,
    branch_u: &ManifoldBranch,
    branch_s: &ManifoldBranch,
    tol_angle: f64,
) -> Result<Vec<HeteroclinicRecord>> {
    if branch_u.section.base.dist(branch_s.section.base) > 1e-8
        || (branch_u.section.energy - branch_s.section.energy).abs() > 1e-8
    {
        return Err(TorusDynError::invalid(
            "heteroclinic search needs both branches on one section and energy level",
        ));
    }
    let pu = &branch_u.points;
    let ps = &branch_s.points;
    if pu.len() < 2 || ps.len() < 2 {
        return Ok(Vec::new());
    }

    const SLACK: f64 = 0.02;
    let shifts = deck_shifts(branch_u, branch_s);
    let candidates: Vec<(usize, f64, usize, f64, Vector2<f64>)> = (0..pu.len() - 1)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            let a = pu[i];
            let r = pu[i + 1] - a;
            for v in &shifts {
                let unshifted = v.norm() < 1e-9;
                for j in 0..ps.len() - 1 {
                    if unshifted && i == 0 && j == 0 {
                        // both curves emanate from the orbit point; that
                        // crossing is the orbit, not a heteroclinic point
                        continue;
                    }
                    let b = ps[j] + v;
                    let s = ps[j + 1] - ps[j];
                    let denom = r[0] * s[1] - r[1] * s[0];
                    if denom.abs() < 1e-14 * r.norm() * s.norm() {
                        continue;
                    }
                    let d = b - a;
                    let t = (d[0] * s[1] - d[1] * s[0]) / denom;
                    let w = (d[0] * r[1] - d[1] * r[0]) / denom;
                    if (-SLACK..=1.0 + SLACK).contains(&t)
                        && (-SLACK..=1.0 + SLACK).contains(&w)
                    {
                        out.push((i, t, j, w, *v));
                    }
                }
            }
            out
        })
        .collect::<Vec<Vec<_>>>()
        .into_iter()
        .flatten()
        .collect();

    let mut records: Vec<HeteroclinicRecord> = Vec::new();
    for (i, t, j, w, v) in candidates {
        let tc = t.clamp(0.0, 1.0);
        let wc = w.clamp(0.0, 1.0);
        let point = pu[i] + tc * (pu[i + 1] - pu[i]);

        let rec = if pu.len() >= 4 && ps.len() >= 4 {
            let cu = LocalCurve::new(pu, &branch_u.arcs, i, Vector2::zeros());
            let cs = LocalCurve::new(ps, &branch_s.arcs, j, v);
            let mut su = cu.sigma0(i, tc);
            let mut ss = cs.sigma0(j, wc);
            for _ in 0..12 {
                let f = cu.eval(su) - cs.eval(ss);
                let du = cu.deriv(su);
                let ds = cs.deriv(ss);
                let jac = Matrix2::new(du[0], -ds[0], du[1], -ds[1]);
                if jac.determinant().abs() < 1e-12 * du.norm() * ds.norm() {
                    break;
                }
                let step = jac.try_inverse().unwrap() * f;
                su = (su - step[0]).clamp(-1.25, 2.25);
                ss = (ss - step[1]).clamp(-1.25, 2.25);
                if step.norm() < 1e-12 {
                    break;
                }
            }
            let separation = (cu.eval(su) - cs.eval(ss)).norm();
            let (tangent_u, tangent_s, angle) = unit_angle(&cu.deriv(su), &cs.deriv(ss));
            HeteroclinicRecord {
                point,
                state: branch_u.states[i],
                tangent_u,
                tangent_s,
                angle,
                transversal: angle > tol_angle,
                arc_u: cu.arc(su),
                arc_s: cs.arc(ss),
                separation,
            }
        } else {
            // too few vertices for a cubic model: segment-level record
            let (tangent_u, tangent_s, angle) =
                unit_angle(&(pu[i + 1] - pu[i]), &(ps[j + 1] - ps[j]));
            HeteroclinicRecord {
                point,
                state: branch_u.states[i],
                tangent_u,
                tangent_s,
                angle,
                transversal: angle > tol_angle,
                arc_u: branch_u.arcs[i] + tc * (branch_u.arcs[i + 1] - branch_u.arcs[i]),
                arc_s: branch_s.arcs[j] + wc * (branch_s.arcs[j + 1] - branch_s.arcs[j]),
                separation: (point - (ps[j] + v + wc * (ps[j + 1] - ps[j]))).norm(),
            }
        };
        if rec.separation <= 1e-6 {
            records.push(rec);
        }
    }

    records.sort_by(|a, b| a.arc_u.total_cmp(&b.arc_u));
    let mut kept: Vec<HeteroclinicRecord> = Vec::new();
    for rec in records {
        if kept.len() >= 128 {
            break;
        }
        if kept
            .iter()
            .all(|k| (k.point - rec.point).norm() > 1e-3)
        {
            kept.push(rec);
        }
    }
    for rec in &mut kept {
        if let Ok(z) = branch_u.section.embed(sys, &rec.point) {
            rec.state = z;
        }
    }
    Ok(kept)
}

/// Largest distance from the windowed part of the unstable polyline to the
/// nearest chart translate of the stable polyline; the window is a pair of
/// arclength fractions.
pub fn manifold_separation(
    branch_u: &ManifoldBranch,
    branch_s: &ManifoldBranch,
    window: (f64, f64),
) -> f64 {
    let shifts = deck_shifts(branch_u, branch_s);
    let lo = window.0.min(window.1) * branch_u.arclength;
    let hi = window.0.max(window.1) * branch_u.arclength;
    branch_u
        .points
        .iter()
        .zip(&branch_u.arcs)
        .filter(|&(_, &a)| a >= lo && a <= hi)
        .map(|(p, _)| {
            shifts
                .iter()
                .map(|v| dist_to_polyline(&(p - v), &branch_s.points))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{grow_local_manifold, GrowOptions, ManifoldSide};
    use crate::orbits::{find_periodic_orbit, NewtonOptions, PeriodicOrbit, PoincareSection};
    use crate::systems::MechanicalSystem;

    use super::super::splitting::hyperbolic_splitting;

    fn rotor_orbit() -> (MechanicalSystem, PeriodicOrbit) {
        let sys = MechanicalSystem::pendulum_rotor();
        let guess = PhasePoint::new(std::f64::consts::PI, 0.0, 0.0, 1.0);
        let orbit =
            find_periodic_orbit(&sys, &guess, 6.3, 1.5, &NewtonOptions::default()).unwrap();
        (sys, orbit)
    }

    fn grown(
        sys: &MechanicalSystem,
        orbit: &PeriodicOrbit,
        side: ManifoldSide,
        upper: bool,
    ) -> ManifoldBranch {
        let split = hyperbolic_splitting(sys, orbit).unwrap();
        let section = PoincareSection::new(sys, &orbit.initial, orbit.energy).unwrap();
        let z = section
            .embed(sys, &(split.direction(side) * 1e-4))
            .unwrap();
        let sign = if (z.p1 > orbit.initial.p1) == upper {
            1.0
        } else {
            -1.0
        };
        grow_local_manifold(sys, orbit, side, sign, 6.0, 1e-8, &GrowOptions::default()).unwrap()
    }

    #[test]
    fn coincident_separatrix_branches_meet_tangentially() {
        let (sys, orbit) = rotor_orbit();
        let u = grown(&sys, &orbit, ManifoldSide::Unstable, true);
        let s = grown(&sys, &orbit, ManifoldSide::Stable, true);
        // the decoupled system's upper separatrix loop is both the unstable
        // and the stable curve; past the apex the two polylines overlap to
        // within the chord sagitta of the discretization
        assert!(manifold_separation(&u, &s, (0.7, 0.95)) < 5e-4);
        let recs = find_heteroclinic(&sys, &u, &s, 1e-4).unwrap();
        assert!(!recs.is_empty(), "coincident curves must report crossings");
        let shifts = deck_shifts(&u, &s);
        for r in &recs {
            assert!(r.angle >= 0.0 && r.angle <= std::f64::consts::FRAC_PI_2);
            assert!(r.angle <= 1e-4, "angle {:.3e} not tangential", r.angle);
            assert!(!r.transversal);
            assert!(r.separation <= 1e-6);
            assert!(dist_to_polyline(&r.point, &u.points) < 1e-6);
            let on_s = shifts
                .iter()
                .map(|v| dist_to_polyline(&(r.point - v), &s.points))
                .fold(f64::INFINITY, f64::min);
            assert!(on_s < 1e-6, "crossing {:.3e} off the stable curve", on_s);
            assert!((sys.hamiltonian(&r.state) - orbit.energy).abs() < 1e-8);
        }
        for w in recs.windows(2) {
            assert!(w[1].arc_u >= w[0].arc_u, "records not sorted");
            assert!((w[1].point - w[0].point).norm() > 1e-3, "duplicate records");
        }
    }

    #[test]
    fn opposite_sheets_do_not_intersect() {
        let (sys, orbit) = rotor_orbit();
        let u = grown(&sys, &orbit, ManifoldSide::Unstable, true);
        let s = grown(&sys, &orbit, ManifoldSide::Stable, false);
        let recs = find_heteroclinic(&sys, &u, &s, 1e-4).unwrap();
        assert!(
            recs.is_empty(),
            "upper unstable and lower stable sheets are disjoint, found {}",
            recs.len()
        );
    }

    #[test]
    fn mismatched_sections_are_rejected() {
        let (sys, orbit) = rotor_orbit();
        let u = grown(&sys, &orbit, ManifoldSide::Unstable, true);
        let mut s = grown(&sys, &orbit, ManifoldSide::Stable, true);
        s.section.energy += 0.1;
        assert!(find_heteroclinic(&sys, &u, &s, 1e-4).is_err());
    }
}
