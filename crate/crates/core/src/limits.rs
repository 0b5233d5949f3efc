//! Closed-form limits: quasi-static oscillator cycle, sudden quench, Carnot.

use crate::config::{EngineConfig, WorkingSubstance};
use crate::error::{OttoError, Result};

fn require_oscillator(config: &EngineConfig) -> Result<()> {
    match config.substance {
        WorkingSubstance::HarmonicOscillator => Ok(()),
        WorkingSubstance::TwoLevel { .. } => Err(OttoError::validation(
            "substance",
            "closed-form quasi-static limit is only available for the oscillator",
        )),
    }
}

fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

fn csch_sq(x: f64) -> f64 {
    let s = x.sinh();
    1.0 / (s * s)
}

/// Work output `-<w>` of the oscillator cycle with adiabatic strokes and
/// perfect thermalization.
pub fn quasistatic_work_ho(config: &EngineConfig) -> Result<f64> {
    require_oscillator(config)?;
    let EngineConfig {
        omega1,
        omega2,
        beta_h,
        beta_c,
        ..
    } = *config;
    Ok(0.5 * (omega2 - omega1) * (coth(0.5 * beta_h * omega2) - coth(0.5 * beta_c * omega1)))
}

/// Standard deviation of the work in the same limit.
///
/// With no transitions during the strokes the work is `(ω₂-ω₁)(n - k)` for
/// independent thermal occupations `n` (cold) and `k` (hot).
pub fn quasistatic_work_std_ho(config: &EngineConfig) -> Result<f64> {
    require_oscillator(config)?;
    let EngineConfig {
        omega1,
        omega2,
        beta_h,
        beta_c,
        ..
    } = *config;
    Ok(0.5
        * (omega2 - omega1).abs()
        * (csch_sq(0.5 * beta_c * omega1) + csch_sq(0.5 * beta_h * omega2)).sqrt())
}

/// Reliability `R_w = -<w>/σ_w` with adiabatic strokes and perfect thermalization.
pub fn quasistatic_reliability_ho(config: &EngineConfig) -> Result<f64> {
    let work = quasistatic_work_ho(config)?;
    if !(work > 0.0) {
        return Err(OttoError::NotEngine { work_output: work });
    }
    Ok(work / quasistatic_work_std_ho(config)?)
}

/// Nonadiabaticity of an instantaneous oscillator quench.
pub fn sudden_quench_q_ho(omega_start: f64, omega_end: f64) -> f64 {
    debug_assert!(omega_start > 0.0 && omega_end > 0.0);
    (omega_start * omega_start + omega_end * omega_end) / (2.0 * omega_start * omega_end)
}

/// `1 - beta_h / beta_c`.
pub fn carnot_efficiency(config: &EngineConfig) -> f64 {
    1.0 - config.beta_h / config.beta_c
}
