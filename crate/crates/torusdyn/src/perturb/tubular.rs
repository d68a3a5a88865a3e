//! Tubular coordinates around a periodic orbit and the pulse potentials
//! that live in them. A window of the orbit is cached as overlapping
//! degree-4 Taylor patches; the foot-point map x ↦ (t*, z) is solved by
//! Newton iteration in jet arithmetic, so pulse fields get exact gradients
//! and Hessians by construction rather than by finite differences.

use std::sync::Arc;

use crate::error::{Result, TorusDynError};
use crate::flow::{integrate_flow, state_taylor, IntegrationOptions};
use crate::geom::{angle_diff, PhasePoint, TorusPoint};
use crate::jets::{poly_eval, Jet2, Scalar};
use crate::orbits::PeriodicOrbit;
use crate::systems::{MechanicalSystem, PerturbationTerm, PotentialField, Support};

use super::delta::{bump, MollifiedDelta};

/// Shift a degree-4 Taylor series from its center to center + dt (exact
/// polynomial recentering).
pub(crate) fn recenter5(c: &[f64; 5], dt: f64) -> [f64; 5] {
    // Horner with simultaneous derivative accumulation
    let mut out = [c[4], 0.0, 0.0, 0.0, 0.0];
    for k in (0..4).rev() {
        out[4] = out[3] + dt * out[4];
        out[3] = out[2] + dt * out[3];
        out[2] = out[1] + dt * out[2];
        out[1] = out[0] + dt * out[1];
        out[0] = c[k] + dt * out[0];
    }
    out
}

fn differentiate5(c: &[f64; 5]) -> [f64; 5] {
    [c[1], 2.0 * c[2], 3.0 * c[3], 4.0 * c[4], 0.0]
}

/// One degree-4 Taylor patch of the orbit curve, centered at `t_ref`.
#[derive(Clone, Debug)]
struct CurvePatch {
    t_ref: f64,
    /// Per phase coordinate: z_i(t_ref + τ) = Σ series[i][k] τ^k.
    series: [[f64; 5]; 4],
}

/// A window of the orbit cached as Taylor patches, supporting curve
/// evaluation at jet-valued times.
#[derive(Clone, Debug)]
pub struct LocalCurve {
    patches: Vec<CurvePatch>,
    t_lo: f64,
    t_hi: f64,
    spacing: f64,
    /// Smallest |ẋ| over the window.
    pub v_min: f64,
    /// Largest |ẋ| over the window.
    pub v_max: f64,
}

impl LocalCurve {
    /// Cache the orbit curve over [t_lo, t_hi] with the given patch spacing.
    pub fn build(
        sys: &MechanicalSystem,
        orbit: &PeriodicOrbit,
        t_lo: f64,
        t_hi: f64,
        spacing: f64,
        opts: &IntegrationOptions,
    ) -> Result<Self> {
        if !(t_hi > t_lo) || !(spacing > 0.0) {
            return Err(TorusDynError::invalid(
                "curve window must have positive extent and spacing",
            ));
        }
        let n = ((t_hi - t_lo) / spacing).ceil() as usize + 1;
        let tr_fwd = if t_hi > 0.0 {
            Some(integrate_flow(sys, &orbit.initial, t_hi, opts)?)
        } else {
            None
        };
        let tr_bwd = if t_lo < 0.0 {
            Some(integrate_flow(sys, &orbit.initial, t_lo, opts)?)
        } else {
            None
        };
        let state_at = |t: f64| -> PhasePoint {
            let y = if t >= 0.0 {
                tr_fwd.as_ref().expect("forward trajectory").eval(t)
            } else {
                tr_bwd.as_ref().expect("backward trajectory").eval(t)
            };
            PhasePoint::new(y[0], y[1], y[2], y[3])
        };
        let mut patches = Vec::with_capacity(n);
        let mut v_min = f64::INFINITY;
        let mut v_max = 0.0_f64;
        for i in 0..n {
            let t_ref = t_lo + (t_hi - t_lo) * i as f64 / (n - 1).max(1) as f64;
            let z = state_at(t_ref);
            let series = state_taylor(sys, &z);
            let speed = (series[0][1].powi(2) + series[1][1].powi(2)).sqrt();
            v_min = v_min.min(speed);
            v_max = v_max.max(speed);
            patches.push(CurvePatch { t_ref, series });
        }
        Ok(LocalCurve {
            patches,
            t_lo,
            t_hi,
            spacing: (t_hi - t_lo) / (n - 1).max(1) as f64,
            v_min,
            v_max,
        })
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.t_lo && t <= self.t_hi
    }

    fn patch_near(&self, t: f64) -> &CurvePatch {
        let idx = ((t - self.t_lo) / self.spacing).round();
        let idx = (idx.max(0.0) as usize).min(self.patches.len() - 1);
        &self.patches[idx]
    }

    /// Position series (x₁, x₂) recentered at time value `t0`.
    fn position_series(&self, t0: f64) -> [[f64; 5]; 2] {
        let patch = self.patch_near(t0);
        let dt = t0 - patch.t_ref;
        [
            recenter5(&patch.series[0], dt),
            recenter5(&patch.series[1], dt),
        ]
    }

    /// Position of the curve at a jet-valued time.
    pub fn position<S: Scalar>(&self, t: S) -> [S; 2] {
        let s = self.position_series(t.value());
        [t.apply_series(&s[0]), t.apply_series(&s[1])]
    }

    /// Velocity ẋ at a jet-valued time.
    pub fn velocity<S: Scalar>(&self, t: S) -> [S; 2] {
        let s = self.position_series(t.value());
        [
            t.apply_series(&differentiate5(&s[0])),
            t.apply_series(&differentiate5(&s[1])),
        ]
    }

    /// Full phase state at a plain time.
    pub fn state(&self, t: f64) -> PhasePoint {
        let patch = self.patch_near(t);
        let dt = t - patch.t_ref;
        let mut v = [0.0; 4];
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = recenter5(&patch.series[i], dt)[0];
        }
        PhasePoint::new(v[0], v[1], v[2], v[3])
    }

    /// Solve the foot-point condition (x ⊖ x(t))·ẋ(t) = 0 for a plain
    /// point, seeded at `t_seed`. Returns (t*, normal offset z*).
    pub fn foot_point(&self, x: TorusPoint, t_seed: f64) -> Result<(f64, f64)> {
        let mut t = t_seed;
        for iter in 0..40 {
            if !self.covers(t) {
                return Err(TorusDynError::chart(format!(
                    "foot-point iteration left the cached window at t = {t:.4}"
                )));
            }
            let s = self.position_series(t);
            let v = [s[0][1], s[1][1]];
            let a = [2.0 * s[0][2], 2.0 * s[1][2]];
            let off = [angle_diff(x.x1, s[0][0]), angle_diff(x.x2, s[1][0])];
            let g = off[0] * v[0] + off[1] * v[1];
            let gp = off[0] * a[0] + off[1] * a[1] - (v[0] * v[0] + v[1] * v[1]);
            if gp.abs() < 1e-14 {
                return Err(TorusDynError::chart(
                    "degenerate foot-point equation (orbit velocity vanishes)",
                ));
            }
            let step = g / gp;
            t -= step;
            if step.abs() < 1e-13 && iter > 0 {
                let s = self.position_series(t);
                let off = [angle_diff(x.x1, s[0][0]), angle_diff(x.x2, s[1][0])];
                let speed = (s[0][1] * s[0][1] + s[1][1] * s[1][1]).sqrt();
                let z = (-s[1][1] * off[0] + s[0][1] * off[1]) / speed;
                return Ok((t, z));
            }
        }
        Err(TorusDynError::chart(
            "foot-point Newton did not converge in 40 iterations",
        ))
    }

    /// Foot-point map as jets around a base point: t*(x) and z(x) as
    /// polynomial expansions in (x − x₀). The scalar foot `t0` must already
    /// solve the base problem.
    pub fn chart_jets(&self, x0: TorusPoint, t0: f64) -> (Jet2, Jet2) {
        let x = [Jet2::var1(x0.x1), Jet2::var2(x0.x2)];
        let mut t = Jet2::constant(t0);
        // each jet-Newton iteration squares the error ideal; four passes
        // make the degree-4 jet exact and polish the scalar part
        for _ in 0..4 {
            let pos = self.position(t);
            let vel = self.velocity(t);
            let s = self.position_series(t.value());
            let acc = [t.apply_series(&differentiate5(&differentiate5(&s[0]))), {
                t.apply_series(&differentiate5(&differentiate5(&s[1])))
            }];
            let off = wrapped_offset(&x, &pos, x0);
            let g = off[0] * vel[0] + off[1] * vel[1];
            let gp = off[0] * acc[0] + off[1] * acc[1] - (vel[0] * vel[0] + vel[1] * vel[1]);
            t = t - g * gp.recip();
        }
        let pos = self.position(t);
        let vel = self.velocity(t);
        let off = wrapped_offset(&x, &pos, x0);
        let speed = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
        // z = n̂·(x − x(t*)) with n̂ = rot90(ẋ)/|ẋ|
        let z = (off[0] * (-vel[1]) + off[1] * vel[0]) * speed.recip();
        (t, z)
    }
}

/// Offset x − x(t) with the constant part torus-wrapped.
fn wrapped_offset(x: &[Jet2; 2], pos: &[Jet2; 2], x0: TorusPoint) -> [Jet2; 2] {
    let mut off = [x[0] - pos[0], x[1] - pos[1]];
    off[0].0[0] = angle_diff(x0.x1, pos[0].value());
    off[1].0[0] = angle_diff(x0.x2, pos[1].value());
    off
}

/// C^∞ plateau cutoff: 1 on |s| ≤ 1/2, 0 on |s| ≥ 1, monotone between.
pub fn plateau<S: Scalar>(s: S) -> S {
    let s0 = s.value();
    if s0.abs() <= 0.5 {
        return S::one();
    }
    if s0.abs() >= 1.0 {
        return S::zero();
    }
    let a = if s0 < 0.0 { s.scale(-1.0) } else { s };
    // transition θ(u) = B(u)/(B(u)+B(1−u)) with B(u) = e^{−1/u}, u = 2(1−|s|)
    let u = (S::one() - a).scale(2.0);
    let b = |w: S| -> S {
        if w.value() <= 1e-8 {
            S::zero()
        } else {
            w.recip().scale(-1.0).exp()
        }
    };
    let bu = b(u);
    let bv = b(S::one() - u);
    bu * (bu + bv).recip()
}

/// Tubular chart around one periodic orbit: the cached curve window plus
/// the data needed to map points into (t*, z) coordinates near a pulse.
#[derive(Clone, Debug)]
pub struct TubularChart {
    pub curve: LocalCurve,
    /// Pulse center time on the orbit.
    pub t1: f64,
    /// Curve point at t₁.
    pub anchor: PhasePoint,
    /// Tube half-width: the chart is used for |z| below this.
    pub radius: f64,
    /// Points farther than this from the anchor are outside every pulse.
    pub guard_radius: f64,
}

/// Build a tubular chart centered at orbit time t₁ wide enough to hold
/// pulses of time half-width `pulse_width` and normal extent `radius`.
///
/// Fails when the orbit velocity nearly vanishes on the window (the normal
/// direction degenerates) or when a time-distant piece of the orbit
/// re-enters the tube (the foot-point map would be ambiguous).
pub fn build_tubular_chart(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    t1: f64,
    pulse_width: f64,
    radius: f64,
    opts: &IntegrationOptions,
) -> Result<TubularChart> {
    if !(radius > 0.0) || !(pulse_width > 0.0) {
        return Err(TorusDynError::invalid(
            "tube radius and pulse width must be positive",
        ));
    }
    // rough speed estimate to size the window
    let v0 = {
        let x = crate::flow::hamiltonian_field(sys, &orbit.initial);
        (x[0] * x[0] + x[1] * x[1]).sqrt()
    };
    if v0 < 1e-6 {
        return Err(TorusDynError::chart(
            "orbit velocity vanishes at the base point; tube normal undefined",
        ));
    }
    let guard = 1.1 * (v0 * 2.0 * pulse_width + radius);
    let w = pulse_width + 1.5 * guard / v0.min(1.0) + 0.1;
    let spacing = 0.01 * (1.0 + orbit.period / 6.0);
    let curve = LocalCurve::build(sys, orbit, t1 - w, t1 + w, spacing, opts)?;
    if curve.v_min < 1e-3 {
        return Err(TorusDynError::chart(format!(
            "orbit velocity drops to {:.3e} inside the chart window; move the pulse center",
            curve.v_min
        )));
    }
    let guard = 1.1 * (curve.v_max * 2.0 * pulse_width + radius);
    let anchor = curve.state(t1);

    // self-approach check: distant-in-time orbit samples must stay out of
    // the guarded ball, otherwise the nearest-foot map is ambiguous there
    let tr = integrate_flow(sys, &orbit.initial, orbit.period, opts)?;
    for (ts, y) in tr.sample(512) {
        let sep = time_to_window(ts, t1, orbit.period);
        if sep * curve.v_min <= 2.2 * guard {
            continue; // arc-close points belong to the tube itself
        }
        let p = TorusPoint::new(y[0], y[1]);
        if p.dist(anchor.x) < 2.0 * guard {
            return Err(TorusDynError::chart(format!(
                "orbit re-enters the tube at t = {ts:.3}; shrink the radius or move t1"
            )));
        }
    }

    Ok(TubularChart {
        curve,
        t1,
        anchor,
        radius,
        guard_radius: guard,
    })
}

/// Shortest time distance from `t` to `t1` modulo the period.
fn time_to_window(t: f64, t1: f64, period: f64) -> f64 {
    let mut d = (t - t1).rem_euclid(period);
    if d > 0.5 * period {
        d = period - d;
    }
    d.abs()
}

impl TubularChart {
    /// Map a point into tube coordinates (t*, z). Errors when the point is
    /// outside the guarded neighborhood of the pulse anchor.
    pub fn coords(&self, x: TorusPoint) -> Result<(f64, f64)> {
        if x.dist(self.anchor.x) > self.guard_radius {
            return Err(TorusDynError::chart(
                "point lies outside the chart's guarded neighborhood",
            ));
        }
        self.curve.foot_point(x, self.t1)
    }
}

/// Pulse potential h_{α,β}(x) = χ(z/r)·[α(t*)δ(t*) + β(t*)δ′(t*)]·z in tube
/// coordinates: zero 0-jet on the orbit with gradient [αδ + βδ′]·n̂ exactly.
pub struct TubePulse {
    chart: Arc<TubularChart>,
    delta: MollifiedDelta,
    /// Polynomial coefficients of α in (t − t₁).
    alpha: Vec<f64>,
    /// Polynomial coefficients of β in (t − t₁).
    beta: Vec<f64>,
}

impl TubePulse {
    fn profile<S: Scalar>(&self, t: S) -> S {
        // [α(t)δ(t) + β(t)δ′(t)]
        let dt = t - S::from_f64(self.chart.t1);
        let mut out = S::zero();
        if self.alpha.iter().any(|&c| c != 0.0) {
            out = out + poly_eval(&self.alpha, dt) * self.delta.eval(t);
        }
        if self.beta.iter().any(|&c| c != 0.0) {
            out = out + poly_eval(&self.beta, dt) * delta_prime(&self.delta, t);
        }
        out
    }

    fn value_jet(&self, x: TorusPoint) -> Option<Jet2> {
        if x.dist(self.chart.anchor.x) > self.chart.guard_radius {
            return None;
        }
        let (t0, _) = self.chart.curve.foot_point(x, self.chart.t1).ok()?;
        let (lo, hi) = self.delta.support();
        if t0 < lo - 1e-12 || t0 > hi + 1e-12 {
            return None; // pulse vanishes identically at this foot time
        }
        let (t_star, z) = self.chart.curve.chart_jets(x, t0);
        if z.value().abs() >= self.chart.radius {
            return None;
        }
        let cut = plateau(z.scale(1.0 / self.chart.radius));
        Some(cut * self.profile(t_star) * z)
    }
}

/// δ′ evaluated at a jet scalar: ψ′(u)/ε² with ψ′ = ψ·(−2u)/(1−u²)².
pub fn delta_prime<S: Scalar>(delta: &MollifiedDelta, t: S) -> S {
    let u = (t - S::from_f64(delta.center)).scale(1.0 / delta.width);
    let u0 = u.value();
    if u0 * u0 >= 1.0 - 1e-8 {
        return S::zero();
    }
    let d = S::one() - u * u;
    let dinv = d.recip();
    bump(u) * u.scale(-2.0) * dinv * dinv * S::from_f64(1.0 / (delta.width * delta.width))
}

/// δ″ evaluated at a jet scalar: ψ″(u)/ε³ with ψ″ = ψ·(g² + g′),
/// g = −2u/(1−u²)², g′ = −2/(1−u²)² − 8u²/(1−u²)³.
pub fn delta_double_prime<S: Scalar>(delta: &MollifiedDelta, t: S) -> S {
    let u = (t - S::from_f64(delta.center)).scale(1.0 / delta.width);
    let u0 = u.value();
    if u0 * u0 >= 1.0 - 1e-8 {
        return S::zero();
    }
    let d = S::one() - u * u;
    let dinv = d.recip();
    let d2 = dinv * dinv;
    let g = u.scale(-2.0) * d2;
    let gp = d2.scale(-2.0) - (u * u).scale(8.0) * d2 * dinv;
    let eps = delta.width;
    (g * g + gp) * bump(u) * S::from_f64(1.0 / (eps * eps * eps))
}

impl std::fmt::Debug for TubePulse {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TubePulse")
            .field("t1", &self.chart.t1)
            .field("width", &self.delta.width)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .finish()
    }
}

impl PotentialField for TubePulse {
    fn eval(&self, x: TorusPoint) -> f64 {
        self.value_jet(x).map_or(0.0, |j| j.value())
    }

    fn jet(&self, x: TorusPoint, _order: u8) -> Jet2 {
        self.value_jet(x).unwrap_or_else(Jet2::zero)
    }

    fn support(&self) -> Support {
        Support::Ball {
            center: self.chart.anchor.x,
            radius: self.chart.guard_radius,
        }
    }

    fn describe(&self) -> String {
        format!(
            "tube pulse at t1={:.4} (ε={:.3e}, α deg {}, β deg {})",
            self.chart.t1,
            self.delta.width,
            self.alpha.len().saturating_sub(1),
            self.beta.len().saturating_sub(1)
        )
    }
}

/// Build the pulse potential h_{α,β} on a tubular chart. `alpha` and `beta`
/// are polynomial coefficient lists in (t − t₁) multiplying δ and δ′.
pub fn build_h_alpha_beta(
    chart: &Arc<TubularChart>,
    pulse_width: f64,
    alpha: &[f64],
    beta: &[f64],
) -> Result<PerturbationTerm> {
    let delta = MollifiedDelta::new(chart.t1, pulse_width)?;
    let (lo, hi) = delta.support();
    if !chart.curve.covers(lo) || !chart.curve.covers(hi) {
        return Err(TorusDynError::chart(
            "pulse support exceeds the cached chart window",
        ));
    }
    let field = TubePulse {
        chart: Arc::clone(chart),
        delta,
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
    };
    let label = field.describe();
    Ok(PerturbationTerm::new(label, Arc::new(field)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::{find_periodic_orbit, NewtonOptions};
    use approx::assert_relative_eq;

    fn rotor_orbit() -> (MechanicalSystem, PeriodicOrbit) {
        let sys = MechanicalSystem::pendulum_rotor();
        let guess = PhasePoint::new(std::f64::consts::PI, 0.0, 0.0, 1.0);
        let orbit = find_periodic_orbit(&sys, &guess, 6.3, 1.5, &NewtonOptions::default())
            .expect("rotor orbit");
        (sys, orbit)
    }

    #[test]
    fn recenter_matches_direct_evaluation() {
        let c = [1.0, -2.0, 0.5, 3.0, -0.25];
        let r = recenter5(&c, 0.3);
        for tau in [-0.2, 0.0, 0.15] {
            let direct = poly_eval(&c[..], 0.3 + tau);
            let shifted = poly_eval(&r[..], tau);
            assert_relative_eq!(direct, shifted, epsilon = 1e-14);
        }
    }

    #[test]
    fn foot_point_recovers_tube_coordinates() {
        let (sys, orbit) = rotor_orbit();
        let opts = IntegrationOptions::default();
        let chart = build_tubular_chart(&sys, &orbit, 1.0, 0.06, 0.1, &opts).unwrap();
        for (dt, s) in [(0.0, 0.02), (0.03, -0.04), (-0.05, 0.05), (0.02, 0.0)] {
            let t = 1.0 + dt;
            let z = chart.curve.state(t);
            let v = crate::flow::hamiltonian_field(&sys, &z);
            let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let n = [-v[1] / speed, v[0] / speed];
            let x = TorusPoint::new(z.x.x1 + s * n[0], z.x.x2 + s * n[1]).wrap();
            let (t_star, z_star) = chart.coords(x).unwrap();
            assert_relative_eq!(t_star, t, epsilon = 1e-9);
            assert_relative_eq!(z_star, s, epsilon = 1e-9);
        }
    }

    #[test]
    fn chart_jets_match_scalar_foot_point() {
        let (sys, orbit) = rotor_orbit();
        let opts = IntegrationOptions::default();
        let chart = build_tubular_chart(&sys, &orbit, 1.0, 0.06, 0.1, &opts).unwrap();
        let z1 = chart.curve.state(1.02);
        let x0 = TorusPoint::new(z1.x.x1 + 0.01, z1.x.x2 - 0.02).wrap();
        let (t0, _) = chart.curve.foot_point(x0, 1.0).unwrap();
        let (tj, zj) = chart.curve.chart_jets(x0, t0);

        // jet gradients against finite differences of the scalar solve
        let h = 1e-5;
        for (i, (dx1, dx2)) in [(1.0, 0.0), (0.0, 1.0)].iter().enumerate() {
            let xp = TorusPoint::new(x0.x1 + h * dx1, x0.x2 + h * dx2);
            let xm = TorusPoint::new(x0.x1 - h * dx1, x0.x2 - h * dx2);
            let (tp, zp) = chart.curve.foot_point(xp, t0).unwrap();
            let (tm, zm) = chart.curve.foot_point(xm, t0).unwrap();
            let grad_t = if i == 0 {
                tj.deriv(1, 0)
            } else {
                tj.deriv(0, 1)
            };
            let grad_z = if i == 0 {
                zj.deriv(1, 0)
            } else {
                zj.deriv(0, 1)
            };
            assert_relative_eq!(grad_t, (tp - tm) / (2.0 * h), epsilon = 1e-7);
            assert_relative_eq!(grad_z, (zp - zm) / (2.0 * h), epsilon = 1e-7);
        }
    }

    #[test]
    fn pulse_vanishes_on_the_orbit_with_prescribed_gradient() {
        let (sys, orbit) = rotor_orbit();
        let opts = IntegrationOptions::default();
        let chart =
            Arc::new(build_tubular_chart(&sys, &orbit, 1.0, 0.06, 0.1, &opts).unwrap());
        let term = build_h_alpha_beta(&chart, 0.06, &[0.7], &[0.0, 1.3]).unwrap();
        let delta = MollifiedDelta::new(1.0, 0.06).unwrap();

        for dt in [-0.05, -0.02, 0.0, 0.015, 0.04] {
            let t = 1.0 + dt;
            let z = chart.curve.state(t);
            let jet = term.jet(z.x, 2);
            // value vanishes on the curve
            assert!(jet.value().abs() < 1e-12, "value {:.3e}", jet.value());
            // gradient is [α δ + β δ′](t)·n̂(t)
            let v = crate::flow::hamiltonian_field(&sys, &z);
            let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let n = [-v[1] / speed, v[0] / speed];
            let scale = 0.7 * delta.eval(t) + 1.3 * dt * delta.deriv(t, 1);
            assert_relative_eq!(jet.deriv(1, 0), scale * n[0], epsilon = 1e-8, max_relative = 1e-8);
            assert_relative_eq!(jet.deriv(0, 1), scale * n[1], epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn pulse_jets_match_finite_differences_off_the_orbit() {
        let (sys, orbit) = rotor_orbit();
        let opts = IntegrationOptions::default();
        let chart =
            Arc::new(build_tubular_chart(&sys, &orbit, 1.0, 0.06, 0.1, &opts).unwrap());
        let term = build_h_alpha_beta(&chart, 0.06, &[1.0], &[0.5]).unwrap();

        let z1 = chart.curve.state(1.01);
        let x0 = TorusPoint::new(z1.x.x1 + 0.012, z1.x.x2 + 0.01).wrap();
        let jet = term.jet(x0, 2);
        let h = 1e-4;
        let f = |a: f64, b: f64| term.eval(TorusPoint::new(x0.x1 + a, x0.x2 + b));
        let fd_x = (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h);
        let fd_y = (f(0.0, h) - f(0.0, -h)) / (2.0 * h);
        let fd_xx = (f(h, 0.0) - 2.0 * f(0.0, 0.0) + f(-h, 0.0)) / (h * h);
        let fd_xy =
            (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        assert_relative_eq!(jet.deriv(1, 0), fd_x, epsilon = 1e-5, max_relative = 1e-4);
        assert_relative_eq!(jet.deriv(0, 1), fd_y, epsilon = 1e-5, max_relative = 1e-4);
        assert_relative_eq!(jet.deriv(2, 0), fd_xx, epsilon = 1e-2, max_relative = 1e-3);
        assert_relative_eq!(jet.deriv(1, 1), fd_xy, epsilon = 1e-2, max_relative = 1e-3);
    }

    #[test]
    fn pulse_is_zero_outside_its_support() {
        let (sys, orbit) = rotor_orbit();
        let opts = IntegrationOptions::default();
        let chart =
            Arc::new(build_tubular_chart(&sys, &orbit, 1.0, 0.06, 0.1, &opts).unwrap());
        let term = build_h_alpha_beta(&chart, 0.06, &[1.0], &[1.0]).unwrap();

        // far along the orbit: foot time outside the pulse support
        let far = chart.curve.state(1.5);
        assert_eq!(term.eval(far.x), 0.0);
        // far from the orbit in the normal direction
        let z = chart.curve.state(1.0);
        let off = TorusPoint::new(z.x.x1 + 1.5, z.x.x2 + 1.5).wrap();
        assert_eq!(term.eval(off), 0.0);
    }

    #[test]
    fn mollifier_derivative_jets_match_taylor_values() {
        // two independent routes: closed-form ψ′/ψ″ algebra on jet scalars
        // vs. the degree-4 Taylor evaluation behind MollifiedDelta::deriv
        let delta = MollifiedDelta::new(1.0, 0.07).unwrap();
        for t in [0.94, 0.97, 1.0, 1.02, 1.065] {
            assert_relative_eq!(
                delta_prime(&delta, t),
                delta.deriv(t, 1),
                epsilon = 1e-9,
                max_relative = 1e-9
            );
            assert_relative_eq!(
                delta_double_prime(&delta, t),
                delta.deriv(t, 2),
                epsilon = 1e-7,
                max_relative = 1e-8
            );
        }
        assert_eq!(delta_double_prime(&delta, 1.08), 0.0);
    }

    #[test]
    fn plateau_is_flat_then_fades() {
        assert_eq!(plateau(0.0), 1.0);
        assert_eq!(plateau(0.49), 1.0);
        assert_eq!(plateau(-0.3), 1.0);
        assert_eq!(plateau(1.0), 0.0);
        assert_eq!(plateau(-1.4), 0.0);
        let mid = plateau(0.75);
        assert!(mid > 0.0 && mid < 1.0);
        // symmetric and monotone on the shoulder
        assert_relative_eq!(plateau(0.75), plateau(-0.75), epsilon = 1e-15);
        assert!(plateau(0.6) > plateau(0.8));
    }

    #[test]
    fn vanishing_velocity_is_rejected() {
        // librational turning point: p = 0 at the endpoint of oscillation
        let sys = MechanicalSystem::pendulum_rotor();
        let orbit = PeriodicOrbit {
            initial: PhasePoint::new(0.0, 0.0, 0.0, 0.0),
            period: 1.0,
            energy: -1.0,
            residual: 0.0,
            monodromy: crate::geom::SymplecticMatrix4::identity(),
            winding: [0, 0],
        };
        let err = build_tubular_chart(
            &sys,
            &orbit,
            0.0,
            0.05,
            0.1,
            &IntegrationOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, TorusDynError::ChartFailure { .. }));
    }
}
