use thiserror::Error;

/// Errors raised by the simulation and optimization routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OttoError {
    /// A parameter violates a documented precondition.
    #[error("invalid `{key}`: {reason}")]
    Validation { key: &'static str, reason: String },

    /// An integrator, series or iteration failed to meet its tolerance.
    #[error("numerical failure in {stage}: {detail}")]
    Numerical { stage: &'static str, detail: String },

    /// Probability leaked past the basis cutoff.
    #[error("truncation leakage {leakage:.3e} at n_cut = {n_cut} exceeds {limit:.1e}; increase n_cut")]
    Truncation { n_cut: usize, leakage: f64, limit: f64 },

    /// The cycle matrix has more than one stationary distribution.
    #[error("degenerate cycle: stationary distribution is not unique ({detail})")]
    DegenerateCycle { detail: String },

    /// The cycle does not produce work at this operating point.
    #[error("not in the engine regime: work output {work_output:.6e}")]
    NotEngine { work_output: f64 },

    /// No grid point operated as an engine.
    #[error("no engine operation at tau_u = {tau_u}")]
    NoEngineOperation { tau_u: f64 },
}

impl OttoError {
    pub(crate) fn validation(key: &'static str, reason: impl Into<String>) -> Self {
        OttoError::Validation {
            key,
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(stage: &'static str, detail: impl Into<String>) -> Self {
        OttoError::Numerical {
            stage,
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, OttoError::Validation { .. })
    }
}

pub type Result<T> = std::result::Result<T, OttoError>;
