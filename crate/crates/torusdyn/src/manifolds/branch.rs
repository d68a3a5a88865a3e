//! Section-polyline growth of one-dimensional manifold branches: seeds on
//! the eigendirection sized by a first-iterate linearity test, globalization
//! through the (signed) return map with memoized re-seeding, adaptive
//! refinement by spacing and turn angle, invariance diagnostics, and
//! fundamental domains.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector4};

use crate::error::{Result, TorusDynError};
use crate::flow::{integrate_flow_events, EventSpec, IntegrationOptions};
use crate::geom::{angle_diff, PhasePoint};
use crate::orbits::{PeriodicOrbit, PoincareSection};
use crate::systems::MechanicalSystem;

use super::splitting::{hyperbolic_splitting, ManifoldSide};

/// Controls for manifold growth.
#[derive(Clone, Debug)]
pub struct GrowOptions {
    /// Hard budget on polyline vertices.
    pub max_points: usize,
    /// Refine segments longer than this (section-coordinate units).
    pub ds_max: f64,
    /// Refine corners turning faster than this (radians).
    pub angle_max: f64,
    /// Never split segments shorter than this.
    pub ds_min: f64,
    /// Refinement sweeps after the initial lattice.
    pub refine_rounds: usize,
    /// Return-time hint; 0 uses the orbit period.
    pub t_hint: f64,
    pub integration: IntegrationOptions,
}

impl Default for GrowOptions {
    fn default() -> Self {
        GrowOptions {
            max_points: 1600,
            ds_max: 0.04,
            angle_max: 0.2,
            ds_min: 1e-5,
            refine_rounds: 14,
            t_hint: 0.0,
            integration: IntegrationOptions::default(),
        }
    }
}

/// A grown branch of a one-dimensional invariant manifold on a section.
///
/// The polyline starts at the orbit's section point (parameter 0) and is
/// ordered by the manifold parameter s = η·Λ^q, where Λ is the expansion
/// per growth-map application.
#[derive(Clone, Debug)]
pub struct ManifoldBranch {
    pub side: ManifoldSide,
    /// Branch sign: seeds point along +dir or −dir of the eigendirection.
    pub sign: f64,
    /// Section the polyline lives on; its base is the orbit point.
    pub section: PoincareSection,
    /// Orbit period used as the return-map horizon hint.
    pub period: f64,
    /// Expansion factor per growth-map application (> 1 on both sides).
    pub expansion: f64,
    /// Primitive returns per map application (2 for negative multipliers).
    pub map_steps: u32,
    /// Seed offset η fixed by the first-iterate linearity test.
    pub eta: f64,
    /// Manifold parameters of the vertices; params[0] = 0 is the orbit.
    pub params: Vec<f64>,
    /// Section coordinates of the vertices.
    pub points: Vec<Vector2<f64>>,
    /// Phase-space states of the vertices.
    pub states: Vec<PhasePoint>,
    /// Cumulative polyline arclength at each vertex.
    pub arcs: Vec<f64>,
    /// Total polyline arclength in section coordinates.
    pub arclength: f64,
    /// Max |H − k| over the vertices.
    pub energy_defect: f64,
    /// Longest total flow time used to globalize a single vertex.
    pub flow_time: f64,
    /// Set when growth stopped on budget or a failed return, short of the
    /// requested radius.
    pub truncated: bool,
}

/// Next crossing of the section in the flow direction, reached in forward
/// (`time_dir` > 0) or backward time. The crossing orientation itself is
/// always the forward one, so forward and backward returns visit the same
/// discrete set of section points.
pub(crate) fn signed_return(
    sys: &MechanicalSystem,
    sec: &PoincareSection,
    z: &PhasePoint,
    time_dir: f64,
    t_hint: f64,
    opts: &IntegrationOptions,
) -> Result<(PhasePoint, f64)> {
    let base = sec.base.as_vector();
    let normal: Vector4<f64> = sec.flow_dir;
    // angular offsets wrap, so g jumps at the torus cut; genuine crossings
    // are told apart from cut artifacts by |g| afterwards
    let g = move |_t: f64, y: &[f64]| {
        angle_diff(y[0], base[0]) * normal[0]
            + angle_diff(y[1], base[1]) * normal[1]
            + (y[2] - base[2]) * normal[2]
            + (y[3] - base[3]) * normal[3]
    };
    let ev = EventSpec {
        g: &g,
        direction: if time_dir > 0.0 { 1 } else { -1 },
        terminal: false,
    };
    let tr = integrate_flow_events(sys, z, time_dir.signum() * 1.5 * t_hint, opts, &[ev])?;
    let blank = 0.05 * t_hint;
    let residual_cap = 1e-6 * (1.0 + normal.norm());
    let hit = tr
        .events
        .iter()
        .find(|h| h.t.abs() > blank && g(h.t, &h.y).abs() < residual_cap)
        .ok_or(TorusDynError::NoOrbit {
            iterations: 0,
            residual: f64::NAN,
        })?;
    Ok((
        PhasePoint::new(hit.y[0], hit.y[1], hit.y[2], hit.y[3]),
        hit.t,
    ))
}

/// Memoized evaluator for manifold points at parameter s = η·Λ^q: q ≤ 1
/// seeds on the tangent line (validated by the first-iterate test), larger
/// q recurses through the growth map.
struct Grower<'a> {
    sys: &'a MechanicalSystem,
    section: &'a PoincareSection,
    dir: Vector2<f64>,
    eta: f64,
    log_lambda: f64,
    map_steps: u32,
    time_dir: f64,
    t_hint: f64,
    integration: IntegrationOptions,
    cache: BTreeMap<i64, (Vector2<f64>, PhasePoint, f64)>,
    evals: usize,
    max_evals: usize,
}

impl Grower<'_> {
    fn key(q: f64) -> i64 {
        (q * 1e9).round() as i64
    }

    fn apply_map(&mut self, mut z: PhasePoint) -> Result<(PhasePoint, f64)> {
        let mut spent = 0.0;
        for _ in 0..self.map_steps {
            if self.evals >= self.max_evals {
                return Err(TorusDynError::invalid("growth integration budget exhausted"));
            }
            self.evals += 1;
            let (zn, t) = signed_return(
                self.sys,
                self.section,
                &z,
                self.time_dir,
                self.t_hint,
                &self.integration,
            )?;
            z = zn;
            spent += t.abs();
        }
        Ok((z, spent))
    }

    /// Vertex at parameter exponent q: (section coords, state, flow time).
    fn point(&mut self, q: f64) -> Result<(Vector2<f64>, PhasePoint, f64)> {
        if let Some(hit) = self.cache.get(&Self::key(q)) {
            return Ok(*hit);
        }
        let out = if q <= 1.0 {
            let s = self.eta * (q * self.log_lambda).exp();
            let z = self.section.embed(self.sys, &(self.dir * s))?;
            (self.dir * s, z, 0.0)
        } else {
            let (_, parent, spent) = self.point(q - 1.0)?;
            let (z, dt) = self.apply_map(parent)?;
            (self.section.coords(&z), z, spent + dt)
        };
        self.cache.insert(Self::key(q), out);
        Ok(out)
    }
}

fn turn_angle(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let cross = a[0] * b[1] - a[1] * b[0];
    let dot = a.dot(b);
    cross.atan2(dot).abs()
}

/// Grow one branch of the stable or unstable manifold of a hyperbolic
/// orbit to the requested section arclength.
///
/// The seed offset η is halved until the first iterate of the η-seed
/// deviates from the tangent line by at most `seed_tol` (relatively), which
/// bounds the seeding error of every tangent-line point used afterwards.
/// The unstable branch is globalized by the forward return map, the stable
/// branch by the backward one.
pub fn grow_local_manifold(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    side: ManifoldSide,
    sign: f64,
    radius: f64,
    seed_tol: f64,
    opts: &GrowOptions,
) -> Result<ManifoldBranch> {
    if !(radius > 0.0) || !(seed_tol > 0.0) {
        return Err(TorusDynError::invalid(
            "manifold radius and seed tolerance must be positive",
        ));
    }
    let split = hyperbolic_splitting(sys, orbit)?;
    let section = PoincareSection::new(sys, &orbit.initial, orbit.energy)?;
    let rate = split.growth_rate(side);
    let (expansion, map_steps) = if rate > 0.0 {
        (rate, 1u32)
    } else {
        (rate * rate, 2u32)
    };
    let dir = split.direction(side) * sign.signum();
    let t_hint = if opts.t_hint > 0.0 {
        opts.t_hint
    } else {
        orbit.period
    };

    let mut grower = Grower {
        sys,
        section: &section,
        dir,
        eta: 0.0,
        log_lambda: expansion.ln(),
        map_steps,
        time_dir: side.grow_dir(),
        t_hint,
        integration: opts.integration.clone(),
        cache: BTreeMap::new(),
        evals: 0,
        max_evals: opts.max_points.saturating_mul(40).max(50_000),
    };

    // first-iterate linearity test fixes the seed offset
    let mut eta = 1e-3;
    loop {
        let z0 = section.embed(sys, &(dir * eta))?;
        let (z1, _) = grower.apply_map(z0)?;
        let c = section.coords(&z1);
        let along = c.dot(&dir);
        let dev = (c - dir * along).norm();
        if along > eta && dev <= seed_tol * (1.0 + c.norm()) {
            break;
        }
        eta *= 0.5;
        if eta < 1e-10 {
            return Err(TorusDynError::invalid(
                "seed offset underflow: first iterate never reaches the tangent line tolerance",
            ));
        }
    }
    grower.eta = eta;

    // initial lattice: geometric parameters q = i/n0, extended band by band
    // until the polyline reaches the radius
    let dq = 1.0 / 8.0;
    let mut verts: Vec<(f64, Vector2<f64>, PhasePoint, f64)> = Vec::new();
    let mut truncated = false;
    let mut arc = 0.0;
    let mut prev = Vector2::zeros();
    let mut i = 0usize;
    while arc < radius {
        if verts.len() >= opts.max_points || i > 8 * 40 {
            truncated = true;
            break;
        }
        let q = i as f64 * dq;
        match grower.point(q) {
            Ok((c, z, t)) => {
                arc += (c - prev).norm();
                prev = c;
                verts.push((q, c, z, t));
            }
            Err(_) => {
                truncated = true;
                break;
            }
        }
        i += 1;
    }
    if verts.is_empty() {
        return Err(TorusDynError::invalid(
            "manifold growth produced no vertices",
        ));
    }

    // adaptive refinement: split long segments and sharp corners
    for _ in 0..opts.refine_rounds {
        let mut arcs = Vec::with_capacity(verts.len());
        let mut acc = verts[0].1.norm();
        arcs.push(acc);
        for w in verts.windows(2) {
            acc += (w[1].1 - w[0].1).norm();
            arcs.push(acc);
        }
        let mut inserts: Vec<f64> = Vec::new();
        for j in 0..verts.len() - 1 {
            if arcs[j] > radius {
                break;
            }
            let ds = (verts[j + 1].1 - verts[j].1).norm();
            if ds <= opts.ds_min {
                continue;
            }
            let mut need = ds > opts.ds_max;
            if !need && j > 0 {
                let a = verts[j].1 - verts[j - 1].1;
                let b = verts[j + 1].1 - verts[j].1;
                need = turn_angle(&a, &b) > opts.angle_max;
            }
            if !need && j + 2 < verts.len() {
                let a = verts[j + 1].1 - verts[j].1;
                let b = verts[j + 2].1 - verts[j + 1].1;
                need = turn_angle(&a, &b) > opts.angle_max;
            }
            if need {
                inserts.push(0.5 * (verts[j].0 + verts[j + 1].0));
            }
        }
        if inserts.is_empty() {
            break;
        }
        for q in inserts {
            if verts.len() >= opts.max_points {
                truncated = true;
                break;
            }
            match grower.point(q) {
                Ok((c, z, t)) => verts.push((q, c, z, t)),
                Err(_) => truncated = true,
            }
        }
        verts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if truncated {
            break;
        }
    }

    // assemble: orbit point first, then vertices up to the radius
    let mut params = vec![0.0];
    let mut points = vec![Vector2::zeros()];
    let mut states = vec![section.base];
    let mut arcs = vec![0.0];
    let mut energy_defect = 0.0f64;
    let mut flow_time = 0.0f64;
    let mut acc = 0.0;
    for (q, c, z, t) in verts {
        acc += (c - points[points.len() - 1]).norm();
        params.push(eta * (q * grower.log_lambda).exp());
        points.push(c);
        states.push(z);
        arcs.push(acc);
        energy_defect = energy_defect.max((sys.hamiltonian(&z) - orbit.energy).abs());
        flow_time = flow_time.max(t);
        if acc >= radius {
            break;
        }
    }
    let arclength = *arcs.last().unwrap();
    if arclength < radius && !truncated {
        truncated = true;
    }

    Ok(ManifoldBranch {
        side,
        sign: sign.signum(),
        section,
        period: orbit.period,
        expansion,
        map_steps,
        eta,
        params,
        points,
        states,
        arcs,
        arclength,
        energy_defect,
        flow_time,
        truncated,
    })
}

/// Distance from a point to a polyline (minimum over all segments).
pub(crate) fn dist_to_polyline(p: &Vector2<f64>, pts: &[Vector2<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for w in pts.windows(2) {
        let d = w[1] - w[0];
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 {
            ((p - w[0]).dot(&d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        best = best.min((p - (w[0] + d * t)).norm());
    }
    if pts.len() == 1 {
        best = (p - pts[0]).norm();
    }
    best
}

/// Max distance of mapped sample vertices from the branch polyline: the
/// stable side is checked under the forward return map, the unstable side
/// under the backward one, so images always move toward the orbit and stay
/// within the grown curve.
pub fn invariance_defect(
    sys: &MechanicalSystem,
    branch: &ManifoldBranch,
    samples: usize,
    opts: &IntegrationOptions,
) -> Result<f64> {
    let n = branch.points.len();
    if n < 2 || samples == 0 {
        return Err(TorusDynError::invalid(
            "invariance check needs a grown branch and at least one sample",
        ));
    }
    let dir = branch.side.check_dir();
    let mut defect = 0.0f64;
    for k in 0..samples {
        let idx = 1 + (k * (n - 2)) / samples.max(1);
        let mut z = branch.states[idx];
        for _ in 0..branch.map_steps {
            let (zn, _) = signed_return(sys, &branch.section, &z, dir, branch.period, opts)?;
            z = zn;
        }
        let c = branch.section.coords(&z);
        defect = defect.max(dist_to_polyline(&c, &branch.points));
    }
    Ok(defect)
}

/// A fundamental domain on a branch: the sub-polyline between a vertex ξ
/// and its forward return image P(ξ). Every manifold point on the branch is
/// an iterate of exactly one point of the domain.
#[derive(Clone, Debug)]
pub struct FundamentalDomain {
    /// Vertex index of ξ.
    pub start: usize,
    /// Vertex index nearest to P(ξ) (smaller than `start` on the stable
    /// side, where the forward map contracts).
    pub end: usize,
    /// Section coordinates of ξ.
    pub xi: Vector2<f64>,
    /// Section coordinates of P(ξ), recomputed through the return map.
    pub p_xi: Vector2<f64>,
    /// Distance of the recomputed image from the branch polyline.
    pub gap: f64,
}

/// Pick ξ at the given arclength fraction and pair it with its first
/// forward-return image.
pub fn fundamental_domain(
    sys: &MechanicalSystem,
    branch: &ManifoldBranch,
    frac: f64,
    opts: &IntegrationOptions,
) -> Result<FundamentalDomain> {
    let n = branch.points.len();
    if n < 3 {
        return Err(TorusDynError::invalid(
            "branch too short for a fundamental domain",
        ));
    }
    let image_param = |s: f64| match branch.side {
        ManifoldSide::Unstable => s * branch.expansion,
        ManifoldSide::Stable => s / branch.expansion,
    };
    let last = *branch.params.last().unwrap();
    let target = frac.clamp(0.0, 1.0) * branch.arclength;
    // nearest vertex to the target arclength whose image stays on the curve
    let mut start = None;
    let mut best = f64::INFINITY;
    for i in 1..n {
        let d = (branch.arcs[i] - target).abs();
        if d < best && image_param(branch.params[i]) <= last {
            best = d;
            start = Some(i);
        }
    }
    let start = start.ok_or_else(|| {
        TorusDynError::invalid("branch too short: no vertex has its return image on the curve")
    })?;

    let mut z = branch.states[start];
    for _ in 0..branch.map_steps {
        let (zn, _) = signed_return(sys, &branch.section, &z, 1.0, branch.period, opts)?;
        z = zn;
    }
    let p_xi = branch.section.coords(&z);
    let gap = dist_to_polyline(&p_xi, &branch.points);

    let want = image_param(branch.params[start]);
    let mut end = 0;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let d = (branch.params[i] - want).abs();
        if d < best {
            best = d;
            end = i;
        }
    }
    Ok(FundamentalDomain {
        start,
        end,
        xi: branch.points[start],
        p_xi,
        gap,
    })
}
