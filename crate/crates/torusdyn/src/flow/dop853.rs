//! Explicit Runge–Kutta integrator of order 8(5,3) with order-7 dense
//! output, adaptive step control, and event location. Steps are accepted
//! against a mixed 5th/3rd-order error estimate; events are located by
//! sign change on each accepted step and refined by Brent's method on the
//! dense interpolant.

use super::tableau::{A, B, C, D, E3, E5, INTERPOLATOR_POWER, N_STAGES, N_STAGES_EXTENDED};
use crate::error::{Result, TorusDynError};

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
/// Error estimate is O(h^8); classic step-size exponent −1/8.
const ERROR_EXPONENT: f64 = -1.0 / 8.0;
/// Dense-output subdivisions per step when scanning for event crossings.
const EVENT_SUBSTEPS: usize = 8;

/// Right-hand side of an ODE y' = f(t, y).
pub trait OdeRhs {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeRhs for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        (self.1)(t, y, dydt)
    }
}

/// Integration controls. Defaults match the tight tolerances used for
/// orbit location (relative 1e-10).
#[derive(Clone, Copy, Debug)]
pub struct IntegrationOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub first_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            first_step: None,
            max_steps: 2_000_000,
        }
    }
}

/// Event function watched during integration. A hit is recorded when g
/// crosses zero in the requested direction on an accepted step.
pub struct EventSpec<'a> {
    pub g: &'a dyn Fn(f64, &[f64]) -> f64,
    /// +1: only upward crossings, −1: only downward, 0: both.
    pub direction: i8,
    /// Stop the integration at the first hit of this event.
    pub terminal: bool,
}

/// A located event: time, state, and which event fired.
#[derive(Clone, Debug)]
pub struct EventHit {
    pub t: f64,
    pub y: Vec<f64>,
    pub index: usize,
}

/// One accepted step's dense-output polynomial.
#[derive(Clone, Debug)]
struct DenseSegment {
    t_left: f64,
    h: f64,
    y_left: Vec<f64>,
    /// INTERPOLATOR_POWER rows of length n.
    f: Vec<Vec<f64>>,
}

impl DenseSegment {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let x = (t - self.t_left) / self.h;
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for (i, frow) in self.f.iter().rev().enumerate() {
            for (o, &fv) in out.iter_mut().zip(frow) {
                *o += fv;
            }
            let m = if i % 2 == 0 { x } else { 1.0 - x };
            for o in out.iter_mut() {
                *o *= m;
            }
        }
        for (o, &y0) in out.iter_mut().zip(&self.y_left) {
            *o += y0;
        }
    }
}

/// Continuous solution of one integration: endpoint state, dense output
/// over the whole span, and any event hits.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t_start: f64,
    pub t_end: f64,
    pub y_start: Vec<f64>,
    pub y_end: Vec<f64>,
    pub events: Vec<EventHit>,
    pub n_steps: usize,
    pub n_rhs_evals: usize,
    dim: usize,
    segments: Vec<DenseSegment>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interpolated state at time t (clamped to the integration span).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        assert!(!self.segments.is_empty(), "empty trajectory");
        let (lo, hi) = if self.t_start <= self.t_end {
            (self.t_start, self.t_end)
        } else {
            (self.t_end, self.t_start)
        };
        let t = t.clamp(lo, hi);
        self.find_segment(t).eval_into(t, out);
    }

    fn find_segment(&self, t: f64) -> &DenseSegment {
        let forward = self.t_start <= self.t_end;
        let mut lo = 0usize;
        let mut hi = self.segments.len();
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let edge = self.segments[mid].t_left;
            let gone_past = if forward { t >= edge } else { t <= edge };
            if gone_past {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        &self.segments[lo]
    }

    /// n+1 equally spaced samples over the span.
    pub fn sample(&self, n: usize) -> Vec<(f64, Vec<f64>)> {
        (0..=n)
            .map(|i| {
                let t = self.t_start + (self.t_end - self.t_start) * i as f64 / n as f64;
                (t, self.eval(t))
            })
            .collect()
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

fn rms_norm(v: &[f64]) -> f64 {
    let s: f64 = v.iter().map(|x| x * x).sum();
    (s / v.len() as f64).sqrt()
}

/// One ULP of |t| (distance to the next float away from zero).
fn step_ulp(t: f64) -> f64 {
    if t == 0.0 {
        return f64::from_bits(1);
    }
    let a = t.abs();
    f64::from_bits(a.to_bits() + 1) - a
}

/// Starting step size from local derivative magnitudes.
fn select_initial_step(
    rhs: &dyn OdeRhs,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    direction: f64,
    span: f64,
    opts: &IntegrationOptions,
    n_rhs: &mut usize,
) -> f64 {
    let n = y0.len();
    let scale: Vec<f64> = y0
        .iter()
        .map(|&y| opts.atol + y.abs() * opts.rtol)
        .collect();
    let d0 = rms_norm(&y0.iter().zip(&scale).map(|(y, s)| y / s).collect::<Vec<_>>());
    let d1 = rms_norm(&f0.iter().zip(&scale).map(|(f, s)| f / s).collect::<Vec<_>>());
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<f64> = y0
        .iter()
        .zip(f0)
        .map(|(&y, &f)| y + h0 * direction * f)
        .collect();
    let mut f1 = vec![0.0; n];
    rhs.eval(t0 + h0 * direction, &y1, &mut f1);
    *n_rhs += 1;
    let d2 = rms_norm(
        &f1.iter()
            .zip(f0)
            .zip(&scale)
            .map(|((a, b), s)| (a - b) / s)
            .collect::<Vec<_>>(),
    ) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 8.0)
    };
    (100.0 * h0).min(h1).min(span.abs()).min(opts.max_step)
}

/// Integrate y' = f(t, y) from t0 to t1 with dense output and events.
pub fn integrate(
    rhs: &dyn OdeRhs,
    t0: f64,
    t1: f64,
    y0: &[f64],
    opts: &IntegrationOptions,
    events: &[EventSpec],
) -> Result<Trajectory> {
    let n = rhs.dim();
    assert_eq!(y0.len(), n, "initial state has wrong dimension");
    let mut n_rhs = 0usize;

    if t0 == t1 {
        return Ok(Trajectory {
            t_start: t0,
            t_end: t1,
            y_start: y0.to_vec(),
            y_end: y0.to_vec(),
            events: Vec::new(),
            n_steps: 0,
            n_rhs_evals: 0,
            dim: n,
            segments: vec![DenseSegment {
                t_left: t0,
                h: 1.0,
                y_left: y0.to_vec(),
                f: vec![vec![0.0; n]; INTERPOLATOR_POWER],
            }],
        });
    }

    let direction = if t1 > t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut f = vec![0.0; n];
    rhs.eval(t, &y, &mut f);
    n_rhs += 1;

    let mut h_abs = match opts.first_step {
        Some(h) => h.abs().min(opts.max_step),
        None => select_initial_step(rhs, t0, &y, &f, direction, t1 - t0, opts, &mut n_rhs),
    };

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; N_STAGES_EXTENDED];
    let mut y_stage = vec![0.0; n];
    let mut segments: Vec<DenseSegment> = Vec::new();
    let mut event_hits: Vec<EventHit> = Vec::new();
    let mut g_old: Vec<f64> = events.iter().map(|e| (e.g)(t, &y)).collect();
    let mut n_steps = 0usize;

    while direction * (t1 - t) > 0.0 {
        if n_steps >= opts.max_steps {
            return Err(TorusDynError::IllConditioned {
                what: "integration step budget exhausted".into(),
                estimate: n_steps as f64,
            });
        }
        let min_step = 10.0 * step_ulp(t);
        h_abs = h_abs.min(opts.max_step);

        // attempt steps until the error estimate accepts one
        let mut step_rejected = false;
        let (h, t_new, y_new, f_new) = loop {
            if h_abs < min_step {
                return Err(TorusDynError::StepSizeUnderflow { t, h: h_abs });
            }
            let mut h = h_abs * direction;
            let mut t_new = t + h;
            if direction * (t_new - t1) > 0.0 {
                t_new = t1;
            }
            h = t_new - t;
            let h_abs_cur = h.abs();

            k[0].copy_from_slice(&f);
            for s in 1..N_STAGES {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kr) in k.iter().enumerate().take(s) {
                        let a = A[s][j];
                        if a != 0.0 {
                            acc += kr[i] * a;
                        }
                    }
                    y_stage[i] = y[i] + h * acc;
                }
                let (_, tail) = k.split_at_mut(s);
                rhs.eval(t + C[s] * h, &y_stage, &mut tail[0]);
                n_rhs += 1;
            }
            let mut y_new = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for (j, &b) in B.iter().enumerate() {
                    acc += k[j][i] * b;
                }
                y_new[i] = y[i] + h * acc;
            }
            let mut f_new = vec![0.0; n];
            rhs.eval(t_new, &y_new, &mut f_new);
            n_rhs += 1;
            k[N_STAGES].copy_from_slice(&f_new);

            // mixed 5th/3rd-order error estimate
            let mut err5_sq = 0.0;
            let mut err3_sq = 0.0;
            for i in 0..n {
                let scale = opts.atol + y[i].abs().max(y_new[i].abs()) * opts.rtol;
                let mut e5 = 0.0;
                let mut e3 = 0.0;
                for j in 0..=N_STAGES {
                    e5 += k[j][i] * E5[j];
                    e3 += k[j][i] * E3[j];
                }
                e5 /= scale;
                e3 /= scale;
                err5_sq += e5 * e5;
                err3_sq += e3 * e3;
            }
            let error_norm = if err5_sq == 0.0 && err3_sq == 0.0 {
                0.0
            } else {
                h_abs_cur * err5_sq / ((err5_sq + 0.01 * err3_sq) * n as f64).sqrt()
            };

            if error_norm < 1.0 {
                let factor = if error_norm == 0.0 {
                    MAX_FACTOR
                } else {
                    MAX_FACTOR.min(SAFETY * error_norm.powf(ERROR_EXPONENT))
                };
                let factor = if step_rejected { factor.min(1.0) } else { factor };
                h_abs = h_abs_cur * factor;
                break (h, t_new, y_new, f_new);
            }
            h_abs = h_abs_cur * MIN_FACTOR.max(SAFETY * error_norm.powf(ERROR_EXPONENT));
            step_rejected = true;
        };

        // extended stages 13..15 for the order-7 interpolant (y still old)
        for s in N_STAGES + 1..N_STAGES_EXTENDED {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kr) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += kr[i] * a;
                    }
                }
                y_stage[i] = y[i] + h * acc;
            }
            let (_, tail) = k.split_at_mut(s);
            rhs.eval(t + C[s] * h, &y_stage, &mut tail[0]);
            n_rhs += 1;
        }

        let mut frows: Vec<Vec<f64>> = vec![vec![0.0; n]; INTERPOLATOR_POWER];
        for i in 0..n {
            let delta = y_new[i] - y[i];
            let f_then = k[0][i];
            let f_now = k[N_STAGES][i];
            frows[0][i] = delta;
            frows[1][i] = h * f_then - delta;
            frows[2][i] = 2.0 * delta - h * (f_now + f_then);
            for r in 0..4 {
                let mut acc = 0.0;
                for (j, kr) in k.iter().enumerate() {
                    let d = D[r][j];
                    if d != 0.0 {
                        acc += kr[i] * d;
                    }
                }
                frows[3 + r][i] = h * acc;
            }
        }
        segments.push(DenseSegment {
            t_left: t,
            h,
            y_left: std::mem::replace(&mut y, y_new),

            f: frows,
        });
        f = f_new;
        n_steps += 1;
        let t_prev = t;
        t = t_new;

        // event detection on [t_prev, t]; the dense output is subsampled so
        // sign changes that cancel within a single large step are still seen
        if !events.is_empty() {
            let seg = segments.last().unwrap();
            let mut earliest_terminal: Option<f64> = None;
            let mut hits_this_step: Vec<(f64, usize)> = Vec::new();
            let mut buf = vec![0.0; n];
            for isub in 1..=EVENT_SUBSTEPS {
                let last = isub == EVENT_SUBSTEPS;
                let frac = isub as f64 / EVENT_SUBSTEPS as f64;
                let t_sub = if last { t } else { t_prev + frac * (t - t_prev) };
                let y_sub: &[f64] = if last {
                    &y
                } else {
                    seg.eval_into(t_sub, &mut buf);
                    &buf
                };
                let t_lo = t_prev + (isub - 1) as f64 / EVENT_SUBSTEPS as f64 * (t - t_prev);
                for (ie, ev) in events.iter().enumerate() {
                    let g_new = (ev.g)(t_sub, y_sub);
                    let old = g_old[ie];
                    let up = old < 0.0 && g_new >= 0.0;
                    let down = old > 0.0 && g_new <= 0.0;
                    let crossed = match ev.direction {
                        1 => up,
                        -1 => down,
                        _ => up || down,
                    };
                    if crossed {
                        let gfun = |tt: f64| {
                            let mut gb = vec![0.0; n];
                            seg.eval_into(tt, &mut gb);
                            (ev.g)(tt, &gb)
                        };
                        let t_root = brentq(&gfun, t_lo, t_sub, 4.0 * f64::EPSILON, 1e-14, 100)
                            .unwrap_or(t_sub);
                        hits_this_step.push((t_root, ie));
                        if ev.terminal {
                            let better = match earliest_terminal {
                                None => true,
                                Some(tb) => direction * (t_root - tb) < 0.0,
                            };
                            if better {
                                earliest_terminal = Some(t_root);
                            }
                        }
                    }
                    g_old[ie] = g_new;
                }
            }
            hits_this_step
                .sort_by(|a, b| (direction * a.0).partial_cmp(&(direction * b.0)).unwrap());
            for (t_root, ie) in hits_this_step {
                if let Some(tb) = earliest_terminal {
                    if direction * (t_root - tb) > 0.0 {
                        continue;
                    }
                }
                seg.eval_into(t_root, &mut buf);
                event_hits.push(EventHit {
                    t: t_root,
                    y: buf.clone(),
                    index: ie,
                });
            }
            if let Some(tb) = earliest_terminal {
                let mut y_end = vec![0.0; n];
                seg.eval_into(tb, &mut y_end);
                return Ok(Trajectory {
                    t_start: t0,
                    t_end: tb,
                    y_start: y0.to_vec(),
                    y_end,
                    events: event_hits,
                    n_steps,
                    n_rhs_evals: n_rhs,
                    dim: n,
                    segments,
                });
            }
        }
    }

    Ok(Trajectory {
        t_start: t0,
        t_end: t1,
        y_start: y0.to_vec(),
        y_end: y,
        events: event_hits,
        n_steps,
        n_rhs_evals: n_rhs,
        dim: n,
        segments,
    })
}

/// Brent's method on [a, b]; requires a sign change.
pub fn brentq(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    xtol: f64,
    rtol: f64,
    maxiter: usize,
) -> Option<f64> {
    let (mut xa, mut xb) = (a, b);
    let mut fa = f(xa);
    let mut fb = f(xb);
    if fa == 0.0 {
        return Some(xa);
    }
    if fb == 0.0 {
        return Some(xb);
    }
    if fa * fb > 0.0 {
        return None;
    }
    let (mut xc, mut fc) = (xa, fa);
    let mut d = xb - xa;
    let mut e = d;
    for _ in 0..maxiter {
        if fb * fc > 0.0 {
            xc = xa;
            fc = fa;
            d = xb - xa;
            e = d;
        }
        if fc.abs() < fb.abs() {
            xa = xb;
            xb = xc;
            xc = xa;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * xb.abs() + 0.5 * (xtol + rtol * xb.abs());
        let m = 0.5 * (xc - xb);
        if m.abs() <= tol || fb == 0.0 {
            return Some(xb);
        }
        if e.abs() < tol || fa.abs() <= fb.abs() {
            d = m;
            e = m;
        } else {
            let s = fb / fa;
            let (mut p, mut q) = if xa == xc {
                (2.0 * m * s, 1.0 - s)
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * m * q0 * (q0 - r) - (xb - xa) * (r - 1.0)),
                    (q0 - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        }
        xa = xb;
        fa = fb;
        xb += if d.abs() > tol {
            d
        } else if m > 0.0 {
            tol
        } else {
            -tol
        };
        fb = f(xb);
    }
    Some(xb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn harmonic() -> (usize, impl Fn(f64, &[f64], &mut [f64])) {
        (2, |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        })
    }

    #[test]
    fn integrates_harmonic_oscillator_to_high_accuracy() {
        let rhs = harmonic();
        let tr = integrate(
            &rhs,
            0.0,
            10.0,
            &[1.0, 0.0],
            &IntegrationOptions::default(),
            &[],
        )
        .unwrap();
        assert_relative_eq!(tr.y_end[0], 10.0_f64.cos(), epsilon = 1e-9);
        assert_relative_eq!(tr.y_end[1], -(10.0_f64.sin()), epsilon = 1e-9);
    }

    #[test]
    fn dense_output_tracks_solution_between_steps() {
        let rhs = harmonic();
        let tr = integrate(
            &rhs,
            0.0,
            6.0,
            &[0.0, 1.0],
            &IntegrationOptions::default(),
            &[],
        )
        .unwrap();
        for i in 0..=600 {
            let t = 6.0 * i as f64 / 600.0;
            let y = tr.eval(t);
            assert_relative_eq!(y[0], t.sin(), epsilon = 1e-8);
            assert_relative_eq!(y[1], t.cos(), epsilon = 1e-8);
        }
    }

    #[test]
    fn backward_integration_works() {
        let rhs = harmonic();
        let tr = integrate(
            &rhs,
            0.0,
            -3.0,
            &[1.0, 0.0],
            &IntegrationOptions::default(),
            &[],
        )
        .unwrap();
        assert_relative_eq!(tr.y_end[0], 3.0_f64.cos(), epsilon = 1e-9);
        assert_relative_eq!(tr.y_end[1], 3.0_f64.sin(), epsilon = 1e-9);
        // dense output works on the reversed span too
        let y = tr.eval(-1.5);
        assert_relative_eq!(y[0], 1.5_f64.cos(), epsilon = 1e-8);
    }

    #[test]
    fn event_locates_zero_crossing_and_terminates() {
        let rhs = harmonic();
        // y0 = sin(t) crosses zero downward at t = π
        let g = |_t: f64, y: &[f64]| y[0];
        let ev = EventSpec {
            g: &g,
            direction: -1,
            terminal: true,
        };
        let tr = integrate(
            &rhs,
            0.0,
            10.0,
            &[0.0, 1.0],
            &IntegrationOptions::default(),
            &[ev],
        )
        .unwrap();
        assert_eq!(tr.events.len(), 1);
        assert_relative_eq!(tr.events[0].t, std::f64::consts::PI, epsilon = 1e-10);
        assert_relative_eq!(tr.t_end, std::f64::consts::PI, epsilon = 1e-10);
        assert!(tr.y_end[0].abs() < 1e-10);
    }

    #[test]
    fn non_terminal_events_collect_all_crossings() {
        let rhs = harmonic();
        let g = |_t: f64, y: &[f64]| y[0];
        let ev = EventSpec {
            g: &g,
            direction: 0,
            terminal: false,
        };
        let tr = integrate(
            &rhs,
            0.0,
            10.0,
            &[0.0, 1.0],
            &IntegrationOptions::default(),
            &[ev],
        )
        .unwrap();
        // zeros of sin at π, 2π, 3π
        assert_eq!(tr.events.len(), 3);
        for (i, hit) in tr.events.iter().enumerate() {
            assert_relative_eq!(
                hit.t,
                (i + 1) as f64 * std::f64::consts::PI,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn stiff_blowup_reports_step_underflow() {
        // y' = y² with y(0)=1 blows up at t=1
        let rhs = (1, |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[0] * y[0];
        });
        let err = integrate(
            &rhs,
            0.0,
            2.0,
            &[1.0],
            &IntegrationOptions {
                max_steps: 100_000,
                ..Default::default()
            },
            &[],
        )
        .unwrap_err();
        match err {
            TorusDynError::StepSizeUnderflow { t, .. } => assert!((t - 1.0).abs() < 1e-3),
            TorusDynError::IllConditioned { .. } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn brent_finds_simple_root() {
        let f = |x: f64| x * x - 2.0;
        let r = brentq(&f, 0.0, 2.0, 1e-14, 1e-14, 100).unwrap();
        assert_relative_eq!(r, std::f64::consts::SQRT_2, epsilon = 1e-12);
    }
}
