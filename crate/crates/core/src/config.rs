//! Engine parameterization and its validation.
//!
//! All quantities are measured in units of the cold-stroke frequency `omega1`:
//! frequencies in `omega1`, times in `1/omega1`, energies in `omega1`, inverse
//! temperatures in `1/omega1`. `omega1` defaults to 1.

use crate::error::{OttoError, Result};

/// The quantum system that is driven around the cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkingSubstance {
    /// `H = omega(t) (n + 1/2)`.
    HarmonicOscillator,
    /// `H = omega(t) sigma_z + delta sigma_x`, eigenvalues `±sqrt(omega² + delta²)`.
    TwoLevel { delta: f64 },
}

impl WorkingSubstance {
    /// Half the level splitting of the two-level system at frequency `omega`.
    pub fn tls_half_gap(delta: f64, omega: f64) -> f64 {
        omega.hypot(delta)
    }

    /// Number of energy levels kept in the basis.
    pub fn levels(&self, n_cut: usize) -> usize {
        match self {
            WorkingSubstance::HarmonicOscillator => n_cut,
            WorkingSubstance::TwoLevel { .. } => 2,
        }
    }

    /// Energy eigenvalues at frequency `omega`, ascending.
    ///
    /// Index convention: oscillator levels `n = 0..n_cut`; two-level index 0 is
    /// the ground state `-Δ`, index 1 the excited state `+Δ`.
    pub fn energies(&self, omega: f64, n_cut: usize) -> Vec<f64> {
        match *self {
            WorkingSubstance::HarmonicOscillator => {
                (0..n_cut).map(|n| omega * (n as f64 + 0.5)).collect()
            }
            WorkingSubstance::TwoLevel { delta } => {
                let half_gap = Self::tls_half_gap(delta, omega);
                vec![-half_gap, half_gap]
            }
        }
    }

    /// Gibbs populations at inverse temperature `beta`, in the same ordering as
    /// [`energies`](Self::energies). Oscillator populations are the exact
    /// infinite-basis values `(1-ν)νⁿ` restricted to `n < n_cut` (not renormalized).
    pub fn gibbs(&self, beta: f64, omega: f64, n_cut: usize) -> Vec<f64> {
        match *self {
            WorkingSubstance::HarmonicOscillator => {
                let nu = (-beta * omega).exp();
                let mut p = Vec::with_capacity(n_cut);
                let mut term = -(-beta * omega).exp_m1();
                for _ in 0..n_cut {
                    p.push(term);
                    term *= nu;
                }
                p
            }
            WorkingSubstance::TwoLevel { delta } => {
                let x = beta * Self::tls_half_gap(delta, omega);
                // (e^{x}, e^{-x}) / 2cosh(x), written to stay finite for large x
                let excited = 1.0 / (1.0 + (2.0 * x).exp());
                vec![1.0 - excited, excited]
            }
        }
    }
}

/// Tolerances and thresholds shared by the numerical routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    /// Relative tolerance of the stroke integrator.
    pub ode_tol: f64,
    /// Upper bound on `rate (n̄+1) / energy` for the weak-coupling check.
    pub weak_coupling_max: f64,
    /// Asymmetries must lie in `[r_min, 1 - r_min]`.
    pub r_min: f64,
    /// Largest acceptable probability leakage past `n_cut`.
    pub max_leakage: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            ode_tol: 1e-10,
            weak_coupling_max: 0.05,
            r_min: 1e-3,
            max_leakage: 1e-6,
        }
    }
}

/// Full physical and numerical parameterization of one engine cycle.
///
/// `tau_b = f64::INFINITY` selects perfect thermalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub omega1: f64,
    pub omega2: f64,
    pub beta_h: f64,
    pub beta_c: f64,
    /// Total duration of the two work strokes.
    pub tau_u: f64,
    /// Total duration of the two heat strokes.
    pub tau_b: f64,
    /// Fraction of `tau_u` spent on compression.
    pub r_u: f64,
    /// Fraction of `tau_b` spent in contact with the hot bath.
    pub r_b: f64,
    /// Oscillator damping rate.
    pub kappa: f64,
    /// Two-level damping rate.
    pub gamma: f64,
    pub n_cut: usize,
    pub substance: WorkingSubstance,
    pub numerics: Numerics,
}

impl EngineConfig {
    fn base(substance: WorkingSubstance, omega2: f64, beta_h: f64, beta_c: f64) -> Self {
        EngineConfig {
            omega1: 1.0,
            omega2,
            beta_h,
            beta_c,
            tau_u: 1.0,
            tau_b: f64::INFINITY,
            r_u: 0.5,
            r_b: 0.5,
            kappa: 0.01,
            gamma: 0.01,
            n_cut: 50,
            substance,
            numerics: Numerics::default(),
        }
    }

    /// Oscillator engine with perfect thermalization and default numerics.
    pub fn harmonic(omega2: f64, beta_h: f64, beta_c: f64) -> Self {
        Self::base(WorkingSubstance::HarmonicOscillator, omega2, beta_h, beta_c)
    }

    /// Two-level engine with perfect thermalization and default numerics.
    pub fn two_level(omega2: f64, delta: f64, beta_h: f64, beta_c: f64) -> Self {
        Self::base(WorkingSubstance::TwoLevel { delta }, omega2, beta_h, beta_c)
    }

    pub fn with_tau_u(mut self, tau_u: f64) -> Self {
        self.tau_u = tau_u;
        self
    }

    pub fn with_r_u(mut self, r_u: f64) -> Self {
        self.r_u = r_u;
        self
    }

    pub fn with_tau_b(mut self, tau_b: f64) -> Self {
        self.tau_b = tau_b;
        self
    }

    pub fn with_r_b(mut self, r_b: f64) -> Self {
        self.r_b = r_b;
        self
    }

    pub fn with_n_cut(mut self, n_cut: usize) -> Self {
        self.n_cut = n_cut;
        self
    }

    pub fn with_damping(mut self, rate: f64) -> Self {
        self.kappa = rate;
        self.gamma = rate;
        self
    }

    pub fn with_numerics(mut self, numerics: Numerics) -> Self {
        self.numerics = numerics;
        self
    }

    pub fn perfect_thermalization(&self) -> bool {
        self.tau_b.is_infinite()
    }

    pub fn delta(&self) -> Option<f64> {
        match self.substance {
            WorkingSubstance::HarmonicOscillator => None,
            WorkingSubstance::TwoLevel { delta } => Some(delta),
        }
    }

    /// Durations of the compression and expansion strokes.
    pub fn work_stroke_durations(&self) -> (f64, f64) {
        (self.r_u * self.tau_u, (1.0 - self.r_u) * self.tau_u)
    }

    /// Durations of the hot and cold heat strokes.
    pub fn heat_stroke_durations(&self) -> (f64, f64) {
        (self.r_b * self.tau_b, (1.0 - self.r_b) * self.tau_b)
    }

    /// Energies at `omega1` and `omega2`.
    pub fn energies(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.substance.energies(self.omega1, self.n_cut),
            self.substance.energies(self.omega2, self.n_cut),
        )
    }

    /// Checks every documented invariant.
    pub fn validate(&self) -> Result<()> {
        let num = &self.numerics;
        positive_finite("omega1", self.omega1)?;
        positive_finite("omega2", self.omega2)?;
        if self.omega2 <= self.omega1 {
            return Err(OttoError::validation(
                "omega2",
                format!("must exceed omega1 = {} (got {})", self.omega1, self.omega2),
            ));
        }
        positive_finite("beta_h", self.beta_h)?;
        positive_finite("beta_c", self.beta_c)?;
        if self.beta_c <= self.beta_h {
            return Err(OttoError::validation(
                "beta_c",
                format!("must exceed beta_h = {} (got {})", self.beta_h, self.beta_c),
            ));
        }
        positive_finite("tau_u", self.tau_u)?;
        if !(self.tau_b >= 0.0) {
            return Err(OttoError::validation(
                "tau_b",
                format!("must be non-negative or infinite (got {})", self.tau_b),
            ));
        }
        if !(num.r_min > 0.0 && num.r_min < 0.5) {
            return Err(OttoError::validation(
                "r_min",
                format!("must lie in (0, 0.5) (got {})", num.r_min),
            ));
        }
        asymmetry("r_u", self.r_u, num.r_min)?;
        asymmetry("r_b", self.r_b, num.r_min)?;
        positive_finite("ode_tol", num.ode_tol)?;
        positive_finite("max_leakage", num.max_leakage)?;
        positive_finite("weak_coupling_max", num.weak_coupling_max)?;
        if self.n_cut < 2 {
            return Err(OttoError::validation(
                "n_cut",
                format!("must be at least 2 (got {})", self.n_cut),
            ));
        }
        // damping rates only enter finite heat strokes
        let coupled = !self.perfect_thermalization();
        match self.substance {
            WorkingSubstance::HarmonicOscillator => {
                positive_finite("kappa", self.kappa)?;
                for (omega, beta) in [(self.omega1, self.beta_c), (self.omega2, self.beta_h)] {
                    let occupation = 1.0 / (beta * omega).exp_m1();
                    let ratio = self.kappa * (occupation + 1.0) / omega;
                    if coupled && ratio > num.weak_coupling_max {
                        return Err(OttoError::validation(
                            "kappa",
                            format!(
                                "weak coupling violated at omega = {omega}: kappa (n+1)/omega = {ratio:.4} > {}",
                                num.weak_coupling_max
                            ),
                        ));
                    }
                }
            }
            WorkingSubstance::TwoLevel { delta } => {
                positive_finite("delta", delta)?;
                positive_finite("gamma", self.gamma)?;
                for (omega, beta) in [(self.omega1, self.beta_c), (self.omega2, self.beta_h)] {
                    let half_gap = WorkingSubstance::tls_half_gap(delta, omega);
                    let occupation = 1.0 / ((2.0 * beta * half_gap).exp() + 1.0);
                    let ratio = self.gamma * (occupation + 1.0) / half_gap;
                    if coupled && ratio > num.weak_coupling_max {
                        return Err(OttoError::validation(
                            "gamma",
                            format!(
                                "weak coupling violated at omega = {omega}: gamma (m+1)/Δ = {ratio:.4} > {}",
                                num.weak_coupling_max
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn positive_finite(key: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(OttoError::validation(
            key,
            format!("must be positive and finite (got {value})"),
        ))
    }
}

fn asymmetry(key: &'static str, value: f64, r_min: f64) -> Result<()> {
    if value >= r_min && value <= 1.0 - r_min {
        Ok(())
    } else {
        Err(OttoError::validation(
            key,
            format!("must lie in [{r_min}, {}] (got {value})", 1.0 - r_min),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configs_validate() {
        EngineConfig::harmonic(2.0, 0.1, 0.5).validate().unwrap();
        EngineConfig::two_level(2.0, 1.0, 0.1, 0.5).validate().unwrap();
    }

    #[test]
    fn orientation_is_enforced() {
        let err = EngineConfig::harmonic(0.8, 0.1, 0.5).validate().unwrap_err();
        assert!(matches!(err, OttoError::Validation { key: "omega2", .. }));
        let err = EngineConfig::harmonic(2.0, 0.5, 0.1).validate().unwrap_err();
        assert!(matches!(err, OttoError::Validation { key: "beta_c", .. }));
    }

    #[test]
    fn asymmetry_bounds() {
        let cfg = EngineConfig::harmonic(2.0, 0.1, 0.5);
        assert!(cfg.with_r_u(0.0).validate().is_err());
        assert!(cfg.with_r_u(1.0).validate().is_err());
        assert!(cfg.with_r_u(0.0005).validate().is_err());
        assert!(cfg.with_r_u(0.001).validate().is_ok());
        assert!(cfg.with_r_b(0.9995).validate().is_err());
    }

    #[test]
    fn weak_coupling_limit() {
        // hot bath: n̄ = 1/(e^0.2 - 1) ≈ 4.517, so kappa must stay below ≈ 0.0181
        let cfg = EngineConfig::harmonic(2.0, 0.1, 0.5).with_tau_b(10.0);
        assert!(cfg.with_damping(0.018).validate().is_ok());
        let err = cfg.with_damping(0.019).validate().unwrap_err();
        assert!(matches!(err, OttoError::Validation { key: "kappa", .. }));

        let tls = EngineConfig::two_level(2.0, 1.0, 0.1, 0.5).with_tau_b(10.0);
        assert!(tls.with_damping(0.04).validate().is_ok());
        assert!(tls.with_damping(0.2).validate().is_err());
        // perfect thermalization never uses the rate
        assert!(tls.with_tau_b(f64::INFINITY).with_damping(0.2).validate().is_ok());
    }

    #[test]
    fn tls_needs_positive_delta() {
        let err = EngineConfig::two_level(2.0, 0.0, 0.1, 0.5)
            .validate()
            .unwrap_err();
        assert!(matches!(err, OttoError::Validation { key: "delta", .. }));
    }

    #[test]
    fn gibbs_populations() {
        let ho = WorkingSubstance::HarmonicOscillator;
        let p = ho.gibbs(0.5, 1.0, 200);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((p[1] / p[0] - (-0.5f64).exp()).abs() < 1e-15);

        let tls = WorkingSubstance::TwoLevel { delta: 1.0 };
        let p = tls.gibbs(0.3, 1.0, 2);
        let x = 0.3 * 2f64.sqrt();
        assert!((p[0] - x.exp() / (2.0 * x.cosh())).abs() < 1e-15);
        assert!((p[1] - (-x).exp() / (2.0 * x.cosh())).abs() < 1e-15);
        // zero temperature
        let p = tls.gibbs(1e4, 1.0, 2);
        assert_eq!(p, vec![1.0, 0.0]);
    }
}
