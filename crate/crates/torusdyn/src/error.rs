use thiserror::Error;

/// Errors surfaced by orbit search, chart construction, perturbation
/// synthesis, and manifold growth.
#[derive(Debug, Error)]
pub enum TorusDynError {
    /// The adaptive integrator drove the step size below the floor allowed
    /// by floating point at the current time; the trajectory is likely
    /// stiff or has left the region where the field is well scaled.
    #[error("step size underflow at t = {t:.6e} (|h| = {h:.3e}); the field may be too stiff near this state")]
    StepSizeUnderflow { t: f64, h: f64 },

    /// Newton refinement failed to converge to a closed orbit from the
    /// supplied seed.
    #[error("no periodic orbit found from seed after {iterations} iterations (last residual {residual:.3e})")]
    NoOrbit { iterations: usize, residual: f64 },

    /// The seed collapsed toward a fixed point or a period below the floor,
    /// so the orbit search is ill posed.
    #[error("seed degenerated during refinement: {reason}")]
    DegenerateGuess { reason: String },

    /// A tubular chart could not be erected along the orbit.
    #[error("tubular chart construction failed: {reason}")]
    ChartFailure { reason: String },

    /// A construction that requires a hyperbolic orbit received one that is
    /// not hyperbolic.
    #[error("orbit is not hyperbolic (|tr dP| = {trace_abs:.6} vs. threshold 2)")]
    NotHyperbolic { trace_abs: f64 },

    /// Two localized supports that must stay disjoint overlap.
    #[error("support overlap: {reason}")]
    SupportOverlap { reason: String },

    /// A linear-algebra subproblem was too ill conditioned to trust.
    #[error("ill-conditioned {what} (conditioning estimate {estimate:.3e})")]
    IllConditioned { what: String, estimate: f64 },

    /// Input values outside the domain a routine accepts.
    #[error("invalid input: {reason}")]
    InvalidInput { reason: String },

    /// A perturbation search exhausted its candidate budget without
    /// reaching the requested margins.
    #[error("no candidate within budget improved the orbit ({tried} tried, best margin {best_margin:.3e})")]
    NoImprovement { tried: usize, best_margin: f64 },
}

impl TorusDynError {
    pub fn invalid(reason: impl Into<String>) -> Self {
        TorusDynError::InvalidInput {
            reason: reason.into(),
        }
    }

    pub fn chart(reason: impl Into<String>) -> Self {
        TorusDynError::ChartFailure {
            reason: reason.into(),
        }
    }

    pub fn degenerate(reason: impl Into<String>) -> Self {
        TorusDynError::DegenerateGuess {
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, TorusDynError>;
