//! Invariant manifolds of hyperbolic periodic orbits: eigenstructure of the
//! restricted return map, section-polyline growth of the one-dimensional
//! stable/unstable branches, fundamental domains, intersection records with
//! crossing angles, and Lagrangian-graph potentials that steer the unstable
//! manifold while leaving both orbits untouched.

mod branch;
mod crossing;
mod graph;
mod split;
mod splitting;

pub use branch::{
    fundamental_domain, grow_local_manifold, invariance_defect, FundamentalDomain, GrowOptions,
    ManifoldBranch,
};
pub use crossing::{find_heteroclinic, manifold_separation, HeteroclinicRecord};
pub use graph::{graph_potential, LagrangianGraph};
pub use split::{split_manifolds, SplitOptions, SplitReport};
pub use splitting::{hyperbolic_splitting, HyperbolicSplitting, ManifoldSide};
