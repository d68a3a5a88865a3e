//! Targeted kick potentials. A kick potential is compactly supported near
//! one point of a periodic orbit, vanishes to first order along the whole
//! orbit (so the orbit and its period survive exactly), and its on-orbit
//! Hessian equals a prescribed pulse profile times the rank-one projector
//! m mᵀ onto the dual transverse coordinate of the adapted frame. The
//! transverse return map then moves by the closed-form response block of
//! [`zmap_predicted`], which is what the nondegeneracy fixer exploits.

use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4, Vector4};

use crate::error::{Result, TorusDynError};
use crate::flow::{
    integrate_variational, integrate_variational_with_inverse, linearization, state_taylor,
    IntegrationOptions, VariationalRun,
};
use crate::geom::{PhasePoint, TorusPoint};
use crate::jets::{Jet2, Scalar};
use crate::orbits::{
    classify_nondegeneracy, restricted_poincare, NondegeneracyReport, PeriodicOrbit,
};
use crate::systems::{MechanicalSystem, PerturbationTerm, PotentialField, Support};

use super::adapted::{adapted_frame, AdaptedFrame};
use super::delta::MollifiedDelta;
use super::tubular::{
    build_tubular_chart, delta_double_prime, delta_prime, plateau, recenter5, TubularChart,
};
use super::zmap::{pi_of_z, zmap_predicted, KickProfile};

// ---- degree-4 power series in t, ascending coefficients ----

fn mult5(a: &[f64; 5], b: &[f64; 5]) -> [f64; 5] {
    let mut out = [0.0; 5];
    for i in 0..5 {
        for j in 0..5 - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

fn sub5(a: &[f64; 5], b: &[f64; 5]) -> [f64; 5] {
    core::array::from_fn(|i| a[i] - b[i])
}

fn add5(a: &[f64; 5], b: &[f64; 5]) -> [f64; 5] {
    core::array::from_fn(|i| a[i] + b[i])
}

/// Series reciprocal; the constant term must be nonzero.
fn recip5(d: &[f64; 5]) -> [f64; 5] {
    let mut r = [0.0; 5];
    r[0] = 1.0 / d[0];
    for k in 1..5 {
        let mut s = 0.0;
        for j in 1..=k {
            s += d[j] * r[k - j];
        }
        r[k] = -s * r[0];
    }
    r
}

/// Series square root; the constant term must be positive.
fn sqrt5(s: &[f64; 5]) -> [f64; 5] {
    let mut r = [0.0; 5];
    r[0] = s[0].sqrt();
    for k in 1..5 {
        let mut acc = s[k];
        for j in 1..k {
            acc -= r[j] * r[k - j];
        }
        r[k] = acc / (2.0 * r[0]);
    }
    r
}

/// Degree-4 series of the dual stretch |ẋ|/det[ẋ | ξₓ] about one time.
struct RatioPatch {
    t_ref: f64,
    ratio: [f64; 5],
}

/// Taylor-expand the orbit linearization A(z(t)) to degree 3 at t_ref by
/// differencing along the state's own Taylor curve, then transport the
/// seed ξ through ξ̇ = A(t)ξ and form |ẋ|/det as a series product.
fn ratio_patch(
    sys: &MechanicalSystem,
    run: &VariationalRun,
    xi0: &Vector4<f64>,
    t_ref: f64,
) -> Result<RatioPatch> {
    let z_ref = run.state(t_ref);
    let xi_ref = run.transition(t_ref) * xi0;
    let st = state_taylor(sys, &z_ref);
    let h = 1e-2;
    let sample = |k: f64| -> Matrix4<f64> {
        let dt = k * h;
        let mut y = [0.0; 4];
        for (i, yi) in y.iter_mut().enumerate() {
            let c = &st[i];
            *yi = (((c[4] * dt + c[3]) * dt + c[2]) * dt + c[1]) * dt + c[0];
        }
        linearization(sys, &PhasePoint::new(y[0], y[1], y[2], y[3]))
    };
    let (am2, am1, a0, ap1, ap2) = (
        sample(-2.0),
        sample(-1.0),
        sample(0.0),
        sample(1.0),
        sample(2.0),
    );
    let a_coef = [
        a0,
        ((ap1 - am1) * 8.0 - (ap2 - am2)) / (12.0 * h),
        ((ap1 + am1) * 16.0 - a0 * 30.0 - (ap2 + am2)) / (24.0 * h * h),
        (ap2 - ap1 * 2.0 + am1 * 2.0 - am2) / (12.0 * h * h * h),
    ];
    let mut xi = [Vector4::zeros(); 5];
    xi[0] = xi_ref;
    for k in 0..4 {
        let mut sum = Vector4::zeros();
        for (j, aj) in a_coef.iter().enumerate().take(k + 1) {
            sum += aj * xi[k - j];
        }
        xi[k + 1] = sum / (k as f64 + 1.0);
    }
    let mut vx = [0.0; 5];
    let mut vy = [0.0; 5];
    for k in 0..4 {
        vx[k] = (k as f64 + 1.0) * st[0][k + 1];
        vy[k] = (k as f64 + 1.0) * st[1][k + 1];
    }
    let xi1: [f64; 5] = core::array::from_fn(|k| xi[k][0]);
    let xi2: [f64; 5] = core::array::from_fn(|k| xi[k][1]);
    // det(t) = rot90(ẋ)·ξₓ = ẋ₁ξₓ₂ − ẋ₂ξₓ₁
    let det = sub5(&mult5(&vx, &xi2), &mult5(&vy, &xi1));
    let speed2 = add5(&mult5(&vx, &vx), &mult5(&vy, &vy));
    if det[0].abs() < 1e-10 * speed2[0].sqrt().max(1e-300) {
        return Err(TorusDynError::chart(format!(
            "transverse twist vanishes near t = {t_ref:.4}; shift the pulse center"
        )));
    }
    Ok(RatioPatch {
        t_ref,
        ratio: mult5(&sqrt5(&speed2), &recip5(&det)),
    })
}

/// Potential f(x) = φ(t*) · ½ ℓ₂² · χ(z/r) in tube coordinates, where
/// φ = a·δ + b·δ′ + c·δ″ and ℓ₂ = z·|ẋ(t*)|/det(t*) is the dual
/// transverse coordinate (so ∇ℓ₂ = m on the orbit). The 1-jet vanishes
/// along the orbit and the on-orbit Hessian is exactly φ(t)·m(t)m(t)ᵀ.
pub struct KickPotential {
    chart: Arc<TubularChart>,
    delta: MollifiedDelta,
    kick: KickProfile,
    table: Vec<RatioPatch>,
    table_lo: f64,
    table_spacing: f64,
}

impl KickPotential {
    /// φ at a jet-valued foot time.
    fn profile(&self, t: Jet2) -> Jet2 {
        let mut out = self.delta.eval(t).scale(self.kick.a);
        if self.kick.b != 0.0 {
            out = out + delta_prime(&self.delta, t).scale(self.kick.b);
        }
        if self.kick.c != 0.0 {
            out = out + delta_double_prime(&self.delta, t).scale(self.kick.c);
        }
        out
    }

    /// |ẋ|/det at a jet-valued foot time, from the nearest cached series.
    fn ratio_at(&self, t: Jet2) -> Jet2 {
        let idx = ((t.value() - self.table_lo) / self.table_spacing).round();
        let idx = (idx.max(0.0) as usize).min(self.table.len() - 1);
        let patch = &self.table[idx];
        let series = recenter5(&patch.ratio, t.value() - patch.t_ref);
        t.apply_series(&series)
    }

    fn value_jet(&self, x: TorusPoint) -> Option<Jet2> {
        if x.dist(self.chart.anchor.x) > self.chart.guard_radius {
            return None;
        }
        let (t0, _) = self.chart.curve.foot_point(x, self.chart.t1).ok()?;
        let (lo, hi) = self.delta.support();
        if t0 < lo - 1e-12 || t0 > hi + 1e-12 {
            return None;
        }
        let (t_star, z) = self.chart.curve.chart_jets(x, t0);
        if z.value().abs() >= self.chart.radius {
            return None;
        }
        let l2 = z * self.ratio_at(t_star);
        let cut = plateau(z.scale(1.0 / self.chart.radius));
        Some(self.profile(t_star) * (l2 * l2).scale(0.5) * cut)
    }
}

impl std::fmt::Debug for KickPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KickPotential")
            .field("t1", &self.chart.t1)
            .field("width", &self.delta.width)
            .field("kick", &self.kick)
            .finish()
    }
}

impl PotentialField for KickPotential {
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
            "kick (a={:.3e}, b={:.3e}, c={:.3e}) at t1={:.4} (ε={:.3e}, r={:.3e})",
            self.kick.a, self.kick.b, self.kick.c, self.chart.t1, self.delta.width,
            self.chart.radius
        )
    }
}

/// Build the kick potential realizing the profile φ = a·δ + b·δ′ + c·δ″
/// at the frame's center time. `width` is the mollifier half-width ε and
/// `radius` the transverse extent of the tube cutoff.
pub fn build_kick_potential(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    frame: &AdaptedFrame,
    width: f64,
    radius: f64,
    kick: &KickProfile,
    opts: &IntegrationOptions,
) -> Result<PerturbationTerm> {
    let t1 = frame.t1;
    let delta = MollifiedDelta::new(t1, width)?;
    let spacing = 0.01;
    let lo = t1 - width - 2.0 * spacing;
    let hi = t1 + width + 2.0 * spacing;
    if lo <= 0.0 || hi >= orbit.period {
        return Err(TorusDynError::invalid(format!(
            "pulse window [{lo:.4}, {hi:.4}] must lie strictly inside one period (0, {:.4})",
            orbit.period
        )));
    }
    let chart = Arc::new(build_tubular_chart(sys, orbit, t1, width, radius, opts)?);
    let run = integrate_variational(sys, &orbit.initial, hi, opts)?;
    let n = ((hi - lo) / spacing).ceil() as usize + 1;
    let mut table = Vec::with_capacity(n);
    for k in 0..n {
        table.push(ratio_patch(sys, &run, &frame.xi0, lo + k as f64 * spacing)?);
    }
    let field = KickPotential {
        chart,
        delta,
        kick: *kick,
        table,
        table_lo: lo,
        table_spacing: spacing,
    };
    let label = format!(
        "kick[{:.3e},{:.3e},{:.3e}]@{:.3}",
        kick.a, kick.b, kick.c, t1
    );
    Ok(PerturbationTerm::new(label, Arc::new(field)))
}

/// Measured vs. predicted transverse response of the monodromy to a kick.
#[derive(Clone, Debug)]
pub struct KickResponseCheck {
    /// Closed-form block from P and Ṗ.
    pub predicted: Matrix2<f64>,
    /// Transverse block of T⁻¹ Φ_{t₁} M₀⁻¹ (dM/dl) Φ_{t₁}⁻¹ T with dM/dl
    /// measured by central differencing of real perturbed monodromies.
    pub measured: Matrix2<f64>,
    /// Max entrywise |measured − predicted|.
    pub deviation: f64,
    /// Largest frame-response entry outside the transverse block.
    pub leakage: f64,
    /// How far the perturbed period map drifted from the unperturbed one
    /// (should vanish: the kick fixes the orbit pointwise).
    pub orbit_drift: f64,
}

/// Realize the kick as a genuine potential, difference the perturbed
/// monodromies at ±`strength`, and compare the transverse response block
/// against the closed form. The deviation shrinks like ε² as the pulse
/// narrows.
pub fn verify_kick_response(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    t1: f64,
    width: f64,
    radius: f64,
    kick: &KickProfile,
    strength: f64,
    opts: &IntegrationOptions,
) -> Result<KickResponseCheck> {
    if !(strength > 0.0) {
        return Err(TorusDynError::invalid("differencing strength must be positive"));
    }
    let frame = adapted_frame(sys, orbit, t1, opts)?;
    let term = build_kick_potential(sys, orbit, &frame, width, radius, kick, opts)?;
    // narrow pulses demand bounded steps and a tight tolerance: the
    // difference of monodromies is divided by 2·strength afterwards
    let tight = IntegrationOptions {
        rtol: opts.rtol.min(1e-12),
        atol: opts.atol.min(1e-13),
        max_step: opts.max_step.min(width / 3.0),
        ..*opts
    };
    let base = integrate_variational_with_inverse(sys, &orbit.initial, orbit.period, &tight)?;
    let m0 = base.monodromy().0;
    let mut side = [Matrix4::zeros(); 2];
    let mut drift: f64 = 0.0;
    for (i, sgn) in [1.0, -1.0].into_iter().enumerate() {
        let perturbed = sys.add_potential(term.with_scale(sgn * strength));
        let run = integrate_variational(&perturbed, &orbit.initial, orbit.period, &tight)?;
        side[i] = run.monodromy().0;
        drift = drift.max(run.end_state().dist(base.end_state()));
    }
    let dm = (side[0] - side[1]) / (2.0 * strength);
    let m0_inv = m0.try_inverse().ok_or_else(|| TorusDynError::IllConditioned {
        what: "monodromy inversion".into(),
        estimate: f64::INFINITY,
    })?;
    let t_mat = frame.matrix;
    let t_inv = t_mat.try_inverse().ok_or_else(|| TorusDynError::IllConditioned {
        what: "adapted frame inversion".into(),
        estimate: f64::INFINITY,
    })?;
    let z = t_inv * base.transition(t1) * m0_inv * dm * base.inverse_transition(t1) * t_mat;
    let measured = pi_of_z(&z);
    let predicted = zmap_predicted(&frame, kick);
    let mut leakage: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            if (i == 1 || i == 3) && (j == 1 || j == 3) {
                continue;
            }
            leakage = leakage.max(z[(i, j)].abs());
        }
    }
    let deviation = (measured - predicted).abs().max();
    Ok(KickResponseCheck {
        predicted,
        measured,
        deviation,
        leakage,
        orbit_drift: drift,
    })
}

/// Knobs for the nondegeneracy fixer.
#[derive(Clone, Copy, Debug)]
pub struct FixOptions {
    /// Iterate counts m = 1..=m_max that must all become nondegenerate.
    pub m_max: u32,
    /// Margin threshold passed through to the classifier.
    pub margin_tol: f64,
    /// Mollifier half-width of the candidate kicks.
    pub width: f64,
    /// Transverse extent of the candidate kicks.
    pub radius: f64,
    /// Cap on the kick coefficient norm |(a, b, c)|.
    pub budget: f64,
    /// Cap on exact (re-integrated) candidate verifications.
    pub max_trials: usize,
}

impl Default for FixOptions {
    fn default() -> Self {
        FixOptions {
            m_max: 2,
            margin_tol: 1e-6,
            width: 0.05,
            radius: 0.05,
            budget: 1e-2,
            max_trials: 24,
        }
    }
}

/// Outcome of the nondegeneracy fixer.
#[derive(Clone, Debug)]
pub struct NondegeneracyFix {
    /// The kick potential applied; `None` when the orbit already passed.
    pub term: Option<PerturbationTerm>,
    /// Coefficients of the applied kick.
    pub kick: Option<KickProfile>,
    pub before: NondegeneracyReport,
    pub after: NondegeneracyReport,
    pub d_p_before: Matrix2<f64>,
    pub d_p_after: Matrix2<f64>,
    /// |(a, b, c)| of the applied kick (0 when none was needed).
    pub amplitude: f64,
    /// Number of exactly verified candidates.
    pub candidates_tried: usize,
}

/// Make the orbit m-nondegenerate for all m ≤ m_max by adding one kick
/// potential at orbit time t₁. Candidates are ranked by the closed-form
/// response block and then verified exactly: the candidate potential is
/// added to the system, the monodromy re-integrated, and the transverse
/// return map re-classified. Fails with [`TorusDynError::NoImprovement`]
/// when no candidate within the budget clears every margin.
pub fn perturb_to_nondegenerate(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    t1: f64,
    fix: &FixOptions,
    opts: &IntegrationOptions,
) -> Result<NondegeneracyFix> {
    let run0 = integrate_variational_with_inverse(sys, &orbit.initial, orbit.period, opts)?;
    let rp0 = restricted_poincare(sys, &orbit.initial, &run0.monodromy())?;
    let before = classify_nondegeneracy(&rp0.d_p, fix.m_max, fix.margin_tol);
    if before.all_nondegenerate() {
        return Ok(NondegeneracyFix {
            term: None,
            kick: None,
            after: before.clone(),
            before,
            d_p_before: rp0.d_p,
            d_p_after: rp0.d_p,
            amplitude: 0.0,
            candidates_tried: 0,
        });
    }

    let frame = adapted_frame(sys, orbit, t1, opts)?;
    let t_inv = frame
        .matrix
        .try_inverse()
        .ok_or_else(|| TorusDynError::IllConditioned {
            what: "adapted frame inversion".into(),
            estimate: f64::INFINITY,
        })?;
    // transverse block of the unperturbed monodromy in the adapted frame;
    // conjugate to the section block, so margins computed here rank the
    // real ones faithfully
    let conj = t_inv * run0.transition(t1) * run0.monodromy().0 * run0.inverse_transition(t1)
        * frame.matrix;
    let dp_t = pi_of_z(&conj);

    // rank all grid candidates by the smallest predicted margin
    let mut candidates: Vec<(f64, KickProfile)> = Vec::new();
    let amplitudes = [fix.budget / 16.0, fix.budget / 4.0, fix.budget];
    for &s in &amplitudes {
        for da in -1..=1 {
            for db in -1..=1 {
                for dc in -1..=1i32 {
                    if da == 0 && db == 0 && dc == 0 {
                        continue;
                    }
                    let norm =
                        f64::from(da * da + db * db + dc * dc).sqrt();
                    let kick = KickProfile {
                        a: s * f64::from(da) / norm,
                        b: s * f64::from(db) / norm,
                        c: s * f64::from(dc) / norm,
                    };
                    let predicted =
                        dp_t * (Matrix2::identity() + zmap_predicted(&frame, &kick));
                    let report =
                        classify_nondegeneracy(&predicted, fix.m_max, fix.margin_tol);
                    let min_margin = report
                        .per_m
                        .iter()
                        .map(|v| v.margin)
                        .fold(f64::INFINITY, f64::min);
                    if report.all_nondegenerate() {
                        candidates.push((min_margin, kick));
                    }
                }
            }
        }
    }
    // smallest amplitude first, widest predicted margin within an amplitude
    candidates.sort_by(|x, y| {
        let ax = (x.1.a * x.1.a + x.1.b * x.1.b + x.1.c * x.1.c).sqrt();
        let ay = (y.1.a * y.1.a + y.1.b * y.1.b + y.1.c * y.1.c).sqrt();
        ax.partial_cmp(&ay)
            .unwrap()
            .then(y.0.partial_cmp(&x.0).unwrap())
    });

    let pulse_opts = IntegrationOptions {
        max_step: opts.max_step.min(fix.width / 3.0),
        ..*opts
    };
    let mut tried = 0usize;
    let mut best_margin: f64 = 0.0;
    for (_, kick) in candidates.into_iter().take(fix.max_trials) {
        tried += 1;
        let term = build_kick_potential(sys, orbit, &frame, fix.width, fix.radius, &kick, opts)?;
        let perturbed = sys.add_potential(term.clone());
        let run = integrate_variational(&perturbed, &orbit.initial, orbit.period, &pulse_opts)?;
        // the kick must leave the orbit in place
        let drift = run.end_state().dist(run0.end_state());
        if drift > 1e-8 {
            continue;
        }
        let rp = restricted_poincare(&perturbed, &orbit.initial, &run.monodromy())?;
        let after = classify_nondegeneracy(&rp.d_p, fix.m_max, fix.margin_tol);
        let min_margin = after
            .per_m
            .iter()
            .map(|v| v.margin)
            .fold(f64::INFINITY, f64::min);
        best_margin = best_margin.max(min_margin);
        if after.all_nondegenerate() {
            let amplitude = (kick.a * kick.a + kick.b * kick.b + kick.c * kick.c).sqrt();
            return Ok(NondegeneracyFix {
                term: Some(term),
                kick: Some(kick),
                before,
                after,
                d_p_before: rp0.d_p,
                d_p_after: rp.d_p,
                amplitude,
                candidates_tried: tried,
            });
        }
    }
    Err(TorusDynError::NoImprovement {
        tried,
        best_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::integrate_flow;
    use crate::geom::SymplecticMatrix4;
    use crate::orbits::{find_periodic_orbit, NewtonOptions, OrbitClass};
    use approx::assert_relative_eq;

    fn rotor_orbit() -> (MechanicalSystem, PeriodicOrbit) {
        let sys = MechanicalSystem::pendulum_rotor();
        let guess = PhasePoint::new(std::f64::consts::PI, 0.0, 0.0, 1.0);
        let orbit =
            find_periodic_orbit(&sys, &guess, 6.3, 1.5, &NewtonOptions::default()).unwrap();
        (sys, orbit)
    }

    #[test]
    fn kick_vanishes_to_first_order_on_the_orbit() {
        let (sys, orbit) = rotor_orbit();
        let opts = IntegrationOptions::default();
        let frame = adapted_frame(&sys, &orbit, 1.0, &opts).unwrap();
        let kick = KickProfile {
            a: 0.5,
            b: 0.8,
            c: 0.6,
        };
        let term = build_kick_potential(&sys, &orbit, &frame, 0.05, 0.05, &kick, &opts).unwrap();
        let delta = MollifiedDelta::new(1.0, 0.05).unwrap();
        for t_s in [0.96, 0.99, 1.0, 1.02, 1.045] {
            let z_s = orbit.state_at(&sys, t_s, &opts).unwrap();
            let jet = term.jet(z_s.x, 2);
            let phi = kick.a * delta.deriv(t_s, 0)
                + kick.b * delta.deriv(t_s, 1)
                + kick.c * delta.deriv(t_s, 2);
            let scale = 1.0 + phi.abs();
            assert!(jet.0[0].abs() < 1e-12 * scale, "value {} at t={t_s}", jet.0[0]);
            let [gx, gy] = jet.gradient();
            assert!(
                gx.abs().max(gy.abs()) < 1e-7 * scale,
                "gradient ({gx:.2e}, {gy:.2e}) at t={t_s}"
            );
            // on-orbit Hessian is the pulse profile times m mᵀ
            let frame_s =
                super::super::adapted_frame_with_seed(&sys, &orbit, t_s, frame.xi0, &opts)
                    .unwrap();
            let m = frame_s.m;
            let hess = jet.hessian();
            for i in 0..2 {
                for j in 0..2 {
                    assert_relative_eq!(
                        hess[i][j],
                        phi * m[i] * m[j],
                        epsilon = 1e-6 * scale,
                        max_relative = 1e-6
                    );
                }
            }
        }
    }

    #[test]
    fn kick_jets_match_finite_differences_off_the_orbit() {
        let (sys, orbit) = rotor_orbit();
        let opts = IntegrationOptions::default();
        let frame = adapted_frame(&sys, &orbit, 1.0, &opts).unwrap();
        let kick = KickProfile {
            a: 0.4,
            b: 0.3,
            c: 0.2,
        };
        let term = build_kick_potential(&sys, &orbit, &frame, 0.1, 0.1, &kick, &opts).unwrap();
        let z1 = orbit.state_at(&sys, 1.02, &opts).unwrap();
        let x0 = TorusPoint::new(z1.x.x1 + 0.014, z1.x.x2 + 0.011).wrap();
        let jet = term.jet(x0, 2);
        let h = 1e-4;
        let f = |a: f64, b: f64| term.eval(TorusPoint::new(x0.x1 + a, x0.x2 + b));
        let fd_x = (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h);
        let fd_y = (f(0.0, h) - f(0.0, -h)) / (2.0 * h);
        let fd_xx = (f(h, 0.0) - 2.0 * f(0.0, 0.0) + f(-h, 0.0)) / (h * h);
        let fd_yy = (f(0.0, h) - 2.0 * f(0.0, 0.0) + f(0.0, -h)) / (h * h);
        let fd_xy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        assert_relative_eq!(jet.deriv(1, 0), fd_x, epsilon = 1e-5, max_relative = 1e-4);
        assert_relative_eq!(jet.deriv(0, 1), fd_y, epsilon = 1e-5, max_relative = 1e-4);
        assert_relative_eq!(jet.deriv(2, 0), fd_xx, epsilon = 1e-2, max_relative = 1e-3);
        assert_relative_eq!(jet.deriv(0, 2), fd_yy, epsilon = 1e-2, max_relative = 1e-3);
        assert_relative_eq!(jet.deriv(1, 1), fd_xy, epsilon = 1e-2, max_relative = 1e-3);
    }

    #[test]
    fn kick_is_zero_outside_its_support() {
        let (sys, orbit) = rotor_orbit();
        let opts = IntegrationOptions::default();
        let frame = adapted_frame(&sys, &orbit, 1.0, &opts).unwrap();
        let kick = KickProfile {
            a: 1.0,
            b: 1.0,
            c: 1.0,
        };
        let term = build_kick_potential(&sys, &orbit, &frame, 0.05, 0.05, &kick, &opts).unwrap();
        let far_time = orbit.state_at(&sys, 1.5, &opts).unwrap();
        assert_eq!(term.eval(far_time.x), 0.0);
        let z1 = orbit.state_at(&sys, 1.0, &opts).unwrap();
        let far_normal = TorusPoint::new(z1.x.x1 + 1.5, z1.x.x2 + 1.5).wrap();
        assert_eq!(term.eval(far_normal), 0.0);
    }

    #[test]
    fn perturbed_flow_keeps_the_orbit_closed() {
        let (sys, orbit) = rotor_orbit();
        let opts = IntegrationOptions::default();
        let frame = adapted_frame(&sys, &orbit, 1.0, &opts).unwrap();
        let kick = KickProfile {
            a: 0.02,
            b: 0.015,
            c: 0.01,
        };
        let term = build_kick_potential(&sys, &orbit, &frame, 0.05, 0.05, &kick, &opts).unwrap();
        let perturbed = sys.add_potential(term);
        let pulse_opts = IntegrationOptions {
            max_step: 0.05 / 3.0,
            ..opts
        };
        let tr = integrate_flow(&perturbed, &orbit.initial, orbit.period, &pulse_opts).unwrap();
        let end = PhasePoint::new(tr.y_end[0], tr.y_end[1], tr.y_end[2], tr.y_end[3]);
        assert!(
            end.dist(orbit.initial) < 1e-8,
            "orbit closure drifted to {:.3e}",
            end.dist(orbit.initial)
        );
    }

    #[test]
    fn measured_kick_response_matches_the_closed_form() {
        let (sys, orbit) = rotor_orbit();
        let opts = IntegrationOptions::default();
        let kick = KickProfile {
            a: 0.5,
            b: 0.8,
            c: 0.6,
        };
        let check =
            verify_kick_response(&sys, &orbit, 1.0, 0.05, 0.05, &kick, 1e-5, &opts).unwrap();
        assert!(
            check.orbit_drift < 1e-9,
            "orbit drift {:.3e}",
            check.orbit_drift
        );
        assert!(
            check.deviation < 0.01,
            "deviation {:.3e}, measured {:?}, predicted {:?}",
            check.deviation,
            check.measured,
            check.predicted
        );
        assert!(check.leakage < 1e-3, "leakage {:.3e}", check.leakage);
    }

    #[test]
    fn degenerate_free_orbit_is_fixed_within_budget() {
        let sys = MechanicalSystem::free_particle();
        let orbit = PeriodicOrbit {
            initial: PhasePoint::new(0.0, 0.0, 1.0, 0.0),
            period: std::f64::consts::TAU,
            energy: 0.5,
            residual: 0.0,
            monodromy: SymplecticMatrix4::identity(),
            winding: [1, 0],
        };
        let opts = IntegrationOptions::default();
        let fix = perturb_to_nondegenerate(&sys, &orbit, 2.0, &FixOptions::default(), &opts)
            .unwrap();
        assert!(!fix.before.all_nondegenerate());
        assert!(fix.after.all_nondegenerate());
        assert!(fix.term.is_some());
        assert!(fix.amplitude <= 1e-2 + 1e-12);
        let report = crate::orbits::classify_stability(&fix.d_p_after, 1e-9);
        assert_ne!(report.class, OrbitClass::Parabolic);
    }

    #[test]
    fn nondegenerate_orbit_needs_no_kick() {
        let (sys, orbit) = rotor_orbit();
        let opts = IntegrationOptions::default();
        let fix = perturb_to_nondegenerate(&sys, &orbit, 1.0, &FixOptions::default(), &opts)
            .unwrap();
        assert!(fix.term.is_none());
        assert!(fix.before.all_nondegenerate());
        assert_eq!(fix.candidates_tried, 0);
    }
}
