//! Lagrangian graphs over a disc on the torus: momentum fields with exact
//! jets, curl and energy-level diagnostics, a compactly supported tilt that
//! bends the graph without breaking the curl condition, and the potential
//! that restores the energy level over the graph while blending to zero
//! across an outer collar.

use std::sync::Arc;

use nalgebra::Vector2;

use crate::error::{Result, TorusDynError};
use crate::geom::{angle_diff, PhasePoint, TorusPoint};
use crate::jets::{Jet2, Scalar};
use crate::perturb::plateau;
use crate::systems::{MechanicalSystem, PerturbationTerm, PotentialField, Support};

/// Margin kept between the disc boundary and any momentum-field seam.
const SEAM_MARGIN: f64 = 0.05;

/// A momentum field p(x) over a disc D on the torus, carrying exact jets,
/// with the nested cutoff radii r_v < r_vbar < r_u used by the blending
/// construction (core, inner collar edge, outer support radius).
#[derive(Clone)]
pub struct LagrangianGraph {
    momentum_jet: Arc<dyn Fn(TorusPoint) -> [Jet2; 2] + Send + Sync>,
    /// Disc center on the torus.
    pub center: TorusPoint,
    /// Core radius: tilts and other graph edits stay inside this disc.
    pub r_v: f64,
    /// Inner collar radius: the blend is identically 1 inside.
    pub r_vbar: f64,
    /// Outer support radius: the blend is identically 0 outside.
    pub r_u: f64,
    /// x₁ lines where the momentum formula is not smooth; the disc must
    /// stay clear of them.
    pub seams_x1: Vec<f64>,
    pub label: String,
}

impl std::fmt::Debug for LagrangianGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LagrangianGraph")
            .field("label", &self.label)
            .field("center", &self.center)
            .field("radii", &(self.r_v, self.r_vbar, self.r_u))
            .field("seams_x1", &self.seams_x1)
            .finish()
    }
}

impl LagrangianGraph {
    /// Build a graph from a momentum-jet closure; the closure must return
    /// the degree-4 jets of (p₁, p₂) in the chart centered at `x`.
    pub fn from_momentum(
        label: impl Into<String>,
        center: TorusPoint,
        radii: (f64, f64, f64),
        seams_x1: Vec<f64>,
        momentum_jet: impl Fn(TorusPoint) -> [Jet2; 2] + Send + Sync + 'static,
    ) -> Result<Self> {
        let (r_v, r_vbar, r_u) = radii;
        if !(0.0 < r_v && r_v < r_vbar && r_vbar < r_u && r_u < 1.5) {
            return Err(TorusDynError::invalid(
                "graph radii must satisfy 0 < r_v < r_vbar < r_u < 1.5",
            ));
        }
        Ok(LagrangianGraph {
            momentum_jet: Arc::new(momentum_jet),
            center,
            r_v,
            r_vbar,
            r_u,
            seams_x1,
            label: label.into(),
        })
    }

    /// The upper separatrix cylinder of the pendulum–rotor product system
    /// as a global graph: p₁ = 2cos(d/2) with d the angular offset from
    /// x₁ = 0, and p₂ = 1. Smooth except across the saddle line x₁ = π.
    pub fn pendulum_product_separatrix() -> Self {
        LagrangianGraph::from_momentum(
            "pendulum-rotor upper separatrix",
            TorusPoint::new(0.0, 0.0),
            (0.5, 0.7, 0.9),
            vec![std::f64::consts::PI],
            |x: TorusPoint| {
                let d = Jet2::var1(angle_diff(x.x1, 0.0));
                [d.scale(0.5).cos().scale(2.0), Jet2::constant(1.0)]
            },
        )
        .unwrap()
    }

    /// Degree-4 jets of the momentum components at x.
    pub fn jets(&self, x: TorusPoint) -> [Jet2; 2] {
        (self.momentum_jet)(x)
    }

    /// Momentum values at x.
    pub fn momentum(&self, x: TorusPoint) -> Vector2<f64> {
        let p = self.jets(x);
        Vector2::new(p[0].value(), p[1].value())
    }

    /// The graph point (x, p(x)).
    pub fn lift(&self, x: TorusPoint) -> PhasePoint {
        let p = self.momentum(x);
        PhasePoint::new(x.x1, x.x2, p[0], p[1])
    }

    fn offsets(&self, x: TorusPoint) -> (f64, f64) {
        (
            angle_diff(x.x1, self.center.x1),
            angle_diff(x.x2, self.center.x2),
        )
    }

    fn near_seam(&self, x: TorusPoint, margin: f64) -> bool {
        self.seams_x1
            .iter()
            .any(|&s| angle_diff(x.x1, s).abs() < margin)
    }

    /// Max |∂p₁/∂x₂ − ∂p₂/∂x₁| over an n×n grid on the disc (a seam margin
    /// is excluded): 0 exactly when the graph is Lagrangian.
    pub fn curl_defect(&self, n: usize) -> f64 {
        let mut worst = 0.0f64;
        let r = 0.98 * self.r_u;
        for i in 0..n {
            for j in 0..n {
                let d1 = r * (2.0 * (i as f64 + 0.5) / n as f64 - 1.0);
                let d2 = r * (2.0 * (j as f64 + 0.5) / n as f64 - 1.0);
                if d1 * d1 + d2 * d2 > r * r {
                    continue;
                }
                let x = TorusPoint::new(self.center.x1 + d1, self.center.x2 + d2).wrap();
                if self.near_seam(x, 0.15) {
                    continue;
                }
                let p = self.jets(x);
                worst = worst.max((p[0].deriv(0, 1) - p[1].deriv(1, 0)).abs());
            }
        }
        worst
    }

    /// Max |H(x, p(x)) − k| over an n×n grid on the disc.
    pub fn level_defect(&self, sys: &MechanicalSystem, k: f64, n: usize) -> f64 {
        let mut worst = 0.0f64;
        let r = 0.98 * self.r_u;
        for i in 0..n {
            for j in 0..n {
                let d1 = r * (2.0 * (i as f64 + 0.5) / n as f64 - 1.0);
                let d2 = r * (2.0 * (j as f64 + 0.5) / n as f64 - 1.0);
                if d1 * d1 + d2 * d2 > r * r {
                    continue;
                }
                let x = TorusPoint::new(self.center.x1 + d1, self.center.x2 + d2).wrap();
                if self.near_seam(x, 0.15) {
                    continue;
                }
                worst = worst.max((sys.hamiltonian(&self.lift(x)) - k).abs());
            }
        }
        worst
    }

    /// Add the gradient of a compactly supported bump to the momentum:
    /// p ← p + τ·∇χ with χ = exp(−1/(1 − q/r_v²)) on q < r_v², where q is
    /// the squared chart distance to the disc center. The tilt is a
    /// gradient, so the curl condition survives exactly, and it vanishes
    /// to all orders at the core boundary r_v.
    pub fn tilted(&self, tau: f64) -> LagrangianGraph {
        let inner = self.momentum_jet.clone();
        let center = self.center;
        let r2 = self.r_v * self.r_v;
        let f = move |x: TorusPoint| -> [Jet2; 2] {
            let mut p = inner(x);
            let d1 = Jet2::var1(angle_diff(x.x1, center.x1));
            let d2 = Jet2::var2(angle_diff(x.x2, center.x2));
            let q = d1 * d1 + d2 * d2;
            let w = Jet2::constant(1.0) - q.scale(1.0 / r2);
            if w.value() > 1e-8 {
                // χ = e^{−1/w}; dχ/dq = −χ/(w²r_v²); ∂ᵢχ = 2dᵢ·dχ/dq
                let chi = w.recip().scale(-1.0).exp();
                let dchi_dq = (chi * w.recip() * w.recip()).scale(-1.0 / r2);
                p[0] = p[0] + (dchi_dq * d1).scale(2.0 * tau);
                p[1] = p[1] + (dchi_dq * d2).scale(2.0 * tau);
            }
            p
        };
        LagrangianGraph {
            momentum_jet: Arc::new(f),
            center: self.center,
            r_v: self.r_v,
            r_vbar: self.r_vbar,
            r_u: self.r_u,
            seams_x1: self.seams_x1.clone(),
            label: format!("{} (tilt {tau:.1e})", self.label),
        }
    }
}

/// The potential k − H(x, p(x)) over the graph disc, blended to zero
/// across the collar r_vbar ≤ |x − c| ≤ r_u. Adding it to the system makes
/// the graph sit exactly on the energy level k inside r_vbar.
struct GraphPotential {
    sys: MechanicalSystem,
    graph: LagrangianGraph,
    k: f64,
}

impl GraphPotential {
    fn blend(&self, d1: Jet2, d2: Jet2, r0: f64) -> Jet2 {
        if r0 <= self.graph.r_vbar {
            return Jet2::constant(1.0);
        }
        // r0 is bounded away from 0 here, so the jet square root is safe
        let r = (d1 * d1 + d2 * d2).sqrt();
        let s = Jet2::constant(0.5)
            + (r - Jet2::constant(self.graph.r_vbar))
                .scale(0.5 / (self.graph.r_u - self.graph.r_vbar));
        plateau(s)
    }
}

impl PotentialField for GraphPotential {
    fn eval(&self, x: TorusPoint) -> f64 {
        self.jet(x, 0).value()
    }

    fn jet(&self, x: TorusPoint, order: u8) -> Jet2 {
        let (d1v, d2v) = self.graph.offsets(x);
        let r0 = (d1v * d1v + d2v * d2v).sqrt();
        if r0 >= self.graph.r_u {
            return Jet2::constant(0.0);
        }
        let p = self.graph.jets(x);
        let m = &self.sys.metric_inv;
        let kinetic = (m.g11.jet(x, order) * p[0] * p[0]
            + m.g12.jet(x, order) * p[0] * p[1] * Jet2::constant(2.0)
            + m.g22.jet(x, order) * p[1] * p[1])
            .scale(0.5);
        let h = kinetic + self.sys.potential_jet(x, order);
        let d1 = Jet2::var1(d1v);
        let d2 = Jet2::var2(d2v);
        self.blend(d1, d2, r0) * (Jet2::constant(self.k) - h)
    }

    fn support(&self) -> Support {
        Support::Ball {
            center: self.graph.center,
            radius: self.graph.r_u,
        }
    }

    fn describe(&self) -> String {
        format!(
            "level-restoring potential over '{}' (k = {})",
            self.graph.label, self.k
        )
    }
}

/// Build the perturbation that restores the energy level k over the graph.
///
/// Inside r_vbar the perturbed Hamiltonian satisfies (H + f)(x, p(x)) = k
/// identically; across the collar the potential is blended to zero, which
/// is only smooth when the graph already sits on the level there — the
/// collar residual is checked against `blend_tol` and rejected otherwise.
/// The disc must also stay clear of the momentum field's seams.
pub fn graph_potential(
    sys: &MechanicalSystem,
    graph: &LagrangianGraph,
    k: f64,
    blend_tol: f64,
) -> Result<PerturbationTerm> {
    if !(blend_tol > 0.0) {
        return Err(TorusDynError::invalid("blend tolerance must be positive"));
    }
    for &seam in &graph.seams_x1 {
        let gap = angle_diff(graph.center.x1, seam).abs();
        if gap < graph.r_u + SEAM_MARGIN {
            return Err(TorusDynError::invalid(format!(
                "graph disc reaches within {gap:.3} of the momentum seam at x1 = {seam:.3}",
            )));
        }
    }
    let mut worst = 0.0f64;
    for i in 0..=8 {
        let r = graph.r_vbar + (graph.r_u - graph.r_vbar) * i as f64 / 8.0;
        for j in 0..64 {
            let th = std::f64::consts::TAU * j as f64 / 64.0;
            let x = TorusPoint::new(
                graph.center.x1 + r * th.cos(),
                graph.center.x2 + r * th.sin(),
            )
            .wrap();
            worst = worst.max((sys.hamiltonian(&graph.lift(x)) - k).abs());
        }
    }
    if worst > blend_tol {
        return Err(TorusDynError::invalid(format!(
            "graph leaves the energy level across the blend collar: |H - k| up to {worst:.3e} \
             exceeds {blend_tol:.1e}, the blended potential would be discontinuous",
        )));
    }
    let label = format!("graph[{}]", graph.label);
    Ok(PerturbationTerm::new(
        label,
        Arc::new(GraphPotential {
            sys: sys.clone(),
            graph: graph.clone(),
            k,
        }),
    ))
}
