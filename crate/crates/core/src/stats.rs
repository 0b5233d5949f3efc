//! Work and efficiency statistics of one cycle.

use crate::charfn::{cf_moments, Moments};
use crate::config::EngineConfig;
use crate::error::{OttoError, Result};
use crate::nonadiabatic::{adiabaticity_pair, AdiabaticityPair};

/// First two moments of work and heat plus the derived figures of merit.
///
/// `w` is work done on the working substance, so the engine delivers
/// `work_output = -w_mean`. Reliability and efficiency fields are `None`
/// outside the engine regime (`-⟨w⟩ > 0` and `⟨q_h⟩ > 0`) or when the
/// variance they divide by vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleStatistics {
    pub w_mean: f64,
    pub w_var: f64,
    pub qh_mean: f64,
    pub qh_var: f64,
    pub work_output: f64,
    pub reliability_w: Option<f64>,
    pub efficiency: Option<f64>,
    pub eta2: Option<f64>,
    pub reliability_eta: Option<f64>,
    pub engine_regime: bool,
}

fn variance(second: f64, first: f64, name: &str) -> Result<f64> {
    let var = second - first * first;
    // cancellation noise around an exactly zero variance
    let noise = 1e-9 * second.abs().max(1e-300);
    if var >= 0.0 {
        Ok(var)
    } else if -var <= noise {
        Ok(0.0)
    } else {
        Err(OttoError::numerical(
            "statistics",
            format!("negative {name} variance {var:.6e} (second moment {second:.6e})"),
        ))
    }
}

impl CycleStatistics {
    pub fn from_moments(m: &Moments) -> Result<Self> {
        let w_var = variance(m.w2, m.w, "work")?;
        let qh_var = variance(m.qh2, m.qh, "heat")?;
        let work_output = -m.w;
        let engine_regime = work_output > 0.0 && m.qh > 0.0;
        let mut stats = CycleStatistics {
            w_mean: m.w,
            w_var,
            qh_mean: m.qh,
            qh_var,
            work_output,
            reliability_w: None,
            efficiency: None,
            eta2: None,
            reliability_eta: None,
            engine_regime,
        };
        if engine_regime {
            let efficiency = work_output / m.qh;
            stats.efficiency = Some(efficiency);
            if w_var > 0.0 {
                stats.reliability_w = Some(work_output / w_var.sqrt());
            }
            if qh_var > 0.0 {
                let eta2 = w_var / qh_var;
                stats.eta2 = Some(eta2);
                if eta2 > 0.0 {
                    stats.reliability_eta = Some(efficiency / eta2.sqrt());
                }
            }
        }
        Ok(stats)
    }

    pub fn w_std(&self) -> f64 {
        self.w_var.sqrt()
    }
}

/// Statistics for perfectly thermalizing heat strokes and a given pair of
/// work-stroke nonadiabaticities.
pub fn statistics_perfect_with(config: &EngineConfig, pair: AdiabaticityPair) -> Result<CycleStatistics> {
    CycleStatistics::from_moments(&cf_moments(pair, config)?)
}

/// Statistics for perfectly thermalizing heat strokes. Any finite `tau_b` in
/// the config is ignored.
pub fn statistics_perfect(config: &EngineConfig) -> Result<CycleStatistics> {
    let config = (*config).with_tau_b(f64::INFINITY);
    let pair = adiabaticity_pair(&config)?;
    statistics_perfect_with(&config, pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::{quasistatic_reliability_ho, quasistatic_work_ho};

    #[test]
    fn quasistatic_oscillator() {
        let config = EngineConfig::harmonic(2.0, 0.1, 0.5);
        let s = statistics_perfect_with(&config, AdiabaticityPair::ADIABATIC).unwrap();
        assert!(s.engine_regime);
        assert!((s.work_output - quasistatic_work_ho(&config).unwrap()).abs() < 1e-8);
        assert!((s.work_output - 2.97516).abs() < 1e-5);
        assert!((s.efficiency.unwrap() - 0.5).abs() < 1e-8);
        assert!((s.reliability_w.unwrap() - quasistatic_reliability_ho(&config).unwrap()).abs() < 1e-7);
        assert!((s.reliability_eta.unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn slow_stroke_approaches_quasistatic() {
        let config = EngineConfig::harmonic(2.0, 0.1, 0.5).with_tau_u(200.0);
        let s = statistics_perfect(&config).unwrap();
        let limit = quasistatic_work_ho(&config).unwrap();
        assert!(s.work_output <= limit + 1e-8);
        assert!((s.work_output - limit).abs() < 1e-3);
    }

    #[test]
    fn heat_pump_regime_is_flagged() {
        // β_hω₂ > β_cω₁: the adiabatic cycle runs backwards
        let config = EngineConfig::harmonic(2.0, 0.4, 0.5);
        let s = statistics_perfect_with(&config, AdiabaticityPair::ADIABATIC).unwrap();
        assert!(!s.engine_regime);
        assert!(s.work_output < 0.0);
        assert!(s.reliability_w.is_none() && s.efficiency.is_none() && s.reliability_eta.is_none());
    }

    #[test]
    fn derived_fields_follow_definitions() {
        let m = Moments { w: -2.0, w2: 13.0, qh: 5.0, qh2: 29.0, w_qh: -9.0 };
        let s = CycleStatistics::from_moments(&m).unwrap();
        assert_eq!(s.w_var, 9.0);
        assert_eq!(s.qh_var, 4.0);
        assert_eq!(s.reliability_w, Some(2.0 / 3.0));
        assert_eq!(s.efficiency, Some(0.4));
        assert_eq!(s.eta2, Some(9.0 / 4.0));
        assert!((s.reliability_eta.unwrap() - 0.4 / 1.5).abs() < 1e-15);

        let refrigerator = Moments { w: 1.0, ..m };
        let s = CycleStatistics::from_moments(&refrigerator).unwrap();
        assert!(!s.engine_regime && s.efficiency.is_none() && s.reliability_w.is_none());

        let broken = Moments { w2: 3.0, ..m };
        assert!(CycleStatistics::from_moments(&broken).is_err());
    }
}
