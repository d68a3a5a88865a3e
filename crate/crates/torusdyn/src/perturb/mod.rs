//! Synthesis and analysis of localized potential perturbations: mollified
//! pulses in tubular coordinates around a periodic orbit, the linear
//! response of the return map to such pulses, and the search for
//! perturbations that remove degeneracies.

mod abc;
mod adapted;
mod bsurj;
mod delta;
mod tubular;
mod zmap;

pub use abc::{
    build_kick_potential, perturb_to_nondegenerate, verify_kick_response, FixOptions,
    KickPotential, KickResponseCheck, NondegeneracyFix,
};
pub use adapted::{adapted_frame, adapted_frame_with_seed, twist_window_min, AdaptedFrame};
pub use bsurj::{pulse_response, pulse_response_limit, pulse_span, PulseSpan};
pub use delta::{bump, gauss_legendre, integrate_gl, MollifiedDelta, BUMP_NORMALIZATION};
pub use tubular::{
    build_h_alpha_beta, build_tubular_chart, delta_double_prime, delta_prime, plateau,
    LocalCurve, TubePulse, TubularChart,
};
pub use zmap::{pi_of_z, zmap_predicted, zmap_quadrature, zmap_sensitivity, KickProfile};
