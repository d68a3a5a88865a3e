//! Numerical machinery for mechanical Hamiltonian systems on the 2-torus:
//! locating and classifying periodic orbits on a fixed energy level,
//! synthesizing localized potential perturbations that break orbit
//! degeneracies, and measuring transversality of invariant-manifold
//! intersections.
//!
//! The flow is the Hamiltonian flow of `H(x, p) = ½ pᵀ G⁻¹(x) p + U(x)` on
//! `T² × R²`, with `G⁻¹` a trigonometric-polynomial inverse metric and `U` a
//! sum of analytic potential terms. All state lives in `R⁴` as `(x₁, x₂, p₁,
//! p₂)`; torus wrapping is applied only where identification matters
//! (closure residuals, chart lookups, deduplication).

pub mod error;
pub mod flow;
pub mod geom;
pub mod jets;
pub mod manifolds;
pub mod orbits;
pub mod perturb;
pub mod report;
pub mod systems;

pub use error::TorusDynError;
pub use geom::{PhasePoint, SymplecticFrame, SymplecticMatrix4, TangentPoint, TorusPoint};
pub use orbits::{OrbitClass, PeriodicOrbit};
pub use systems::{MechanicalSystem, PerturbationTerm};
