//! Nonadiabaticity parameters of the work strokes.
//!
//! For the oscillator, `Q >= 1` is built from the classical trajectories
//! `X`, `Y` of `ẍ + ω²(t) x = 0`; `Q = 1` means no transitions between
//! instantaneous levels. For the two-level system, `Q` is the probability of
//! staying in the instantaneous eigenstate.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::config::{EngineConfig, WorkingSubstance};
use crate::error::{OttoError, Result};
use crate::ode::{integrate, OdeOptions};
use crate::protocol::{make_linear_protocol, ProtocolFamily, WorkProtocol};

/// `(Q_f, Q_b)` for the compression and expansion strokes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticityPair {
    pub q_f: f64,
    pub q_b: f64,
}

impl AdiabaticityPair {
    pub const ADIABATIC: AdiabaticityPair = AdiabaticityPair { q_f: 1.0, q_b: 1.0 };

    pub fn new(q_f: f64, q_b: f64) -> Self {
        AdiabaticityPair { q_f, q_b }
    }
}

/// Local error tolerance that keeps the accumulated error of a stroke near `tol`.
///
/// DP5 global error grows roughly linearly with the number of oscillation
/// periods, so the per-step tolerance is divided by the phase swept.
fn stroke_options(protocol: &WorkProtocol, tol: f64) -> OdeOptions {
    let omega_max = protocol.omega_start().max(protocol.omega_end());
    let phase = omega_max * protocol.duration();
    OdeOptions::with_tol((tol / (10.0 * (1.0 + phase))).max(1e-15))
}

/// Final classical trajectories `[X, Ẋ, Y, Ẏ]` at the end of the stroke.
pub fn ho_trajectories(protocol: &WorkProtocol, tol: f64) -> Result<[f64; 4]> {
    let opts = stroke_options(protocol, tol);
    let (state, _) = integrate(
        |t, s: &[f64; 4]| {
            let w2 = protocol.omega_sq(t);
            [s[1], -w2 * s[0], s[3], -w2 * s[2]]
        },
        0.0,
        [0.0, 1.0, 1.0, 0.0],
        protocol.duration(),
        &opts,
    )?;
    Ok(state)
}

/// Oscillator nonadiabaticity `Q(τ, ω_start, ω_end)` of one stroke.
pub fn ho_q(protocol: &WorkProtocol, tol: f64) -> Result<f64> {
    let [x, xd, y, yd] = ho_trajectories(protocol, tol)?;
    let wronskian = xd * y - x * yd;
    let drift = (wronskian - 1.0).abs();
    if drift > 1e4 * tol {
        return Err(OttoError::numerical(
            "ho_q",
            format!(
                "Wronskian drifted by {drift:.3e} over duration {} (tol {tol:.1e})",
                protocol.duration()
            ),
        ));
    }
    let (w1, w2) = (protocol.omega_start(), protocol.omega_end());
    let q = (w1 * w1 * (w2 * w2 * x * x + xd * xd) + (w2 * w2 * y * y + yd * yd)) / (2.0 * w1 * w2);
    if q < 1.0 - 10.0 * tol {
        return Err(OttoError::numerical(
            "ho_q",
            format!("Q = {q} fell below 1 (duration {})", protocol.duration()),
        ));
    }
    Ok(q)
}

/// Instantaneous eigenvectors `(|+>, |->)` of `ω σ_z + δ σ_x`, real.
pub fn tls_eigenvectors(omega: f64, delta: f64) -> ([f64; 2], [f64; 2]) {
    let half = 0.5 * delta.atan2(omega);
    let (s, c) = half.sin_cos();
    ([c, s], [-s, c])
}

/// Propagator of `H(t) = ω(t) σ_z + δ σ_x` in the fixed σ_z basis.
///
/// Returned as `[[re, im]; 4]` in row-major order `U00, U01, U10, U11`.
pub fn tls_propagator(protocol: &WorkProtocol, delta: f64, tol: f64) -> Result<[[f64; 2]; 4]> {
    let opts = stroke_options(&WorkProtocol::new(
        protocol.omega_start().hypot(delta),
        protocol.omega_end().hypot(delta),
        protocol.duration(),
        protocol.family(),
    )?, tol);
    // state: columns of U, each as (re a, im a, re b, im b)
    let rhs = |t: f64, s: &[f64; 8]| {
        let w = protocol.omega(t);
        let mut out = [0.0; 8];
        for col in 0..2 {
            let o = 4 * col;
            let (ar, ai, br, bi) = (s[o], s[o + 1], s[o + 2], s[o + 3]);
            // i dψ/dt = H ψ
            let (ur, ui) = (w * ar + delta * br, w * ai + delta * bi);
            let (vr, vi) = (delta * ar - w * br, delta * ai - w * bi);
            out[o] = ui;
            out[o + 1] = -ur;
            out[o + 2] = vi;
            out[o + 3] = -vr;
        }
        out
    };
    let (s, _) = integrate(rhs, 0.0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0], protocol.duration(), &opts)?;
    let u = [[s[0], s[1]], [s[4], s[5]], [s[2], s[3]], [s[6], s[7]]];

    // unitarity: columns orthonormal
    let norm0 = s[0] * s[0] + s[1] * s[1] + s[2] * s[2] + s[3] * s[3];
    let norm1 = s[4] * s[4] + s[5] * s[5] + s[6] * s[6] + s[7] * s[7];
    let overlap_re = s[0] * s[4] + s[1] * s[5] + s[2] * s[6] + s[3] * s[7];
    let overlap_im = s[0] * s[5] - s[1] * s[4] + s[2] * s[7] - s[3] * s[6];
    let deviation = (norm0 - 1.0)
        .abs()
        .max((norm1 - 1.0).abs())
        .max(overlap_re.hypot(overlap_im));
    if deviation > 1e4 * tol {
        return Err(OttoError::numerical(
            "tls_q",
            format!("propagator unitarity lost: deviation {deviation:.3e}"),
        ));
    }
    Ok(u)
}

/// Staying probabilities `(|<+|U|+>|², |<-|U|->|²)` in the instantaneous eigenbasis.
pub fn tls_staying_probabilities(protocol: &WorkProtocol, delta: f64, tol: f64) -> Result<(f64, f64)> {
    let u = tls_propagator(protocol, delta, tol)?;
    let (start_plus, start_minus) = tls_eigenvectors(protocol.omega_start(), delta);
    let (end_plus, end_minus) = tls_eigenvectors(protocol.omega_end(), delta);
    let element = |bra: [f64; 2], ket: [f64; 2]| {
        let mut re = 0.0;
        let mut im = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                let [ur, ui] = u[2 * r + c];
                re += bra[r] * ur * ket[c];
                im += bra[r] * ui * ket[c];
            }
        }
        re * re + im * im
    };
    Ok((element(end_plus, start_plus), element(end_minus, start_minus)))
}

/// Two-level nonadiabaticity: staying probability in the instantaneous eigenstate.
pub fn tls_q(protocol: &WorkProtocol, delta: f64, tol: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(OttoError::validation("delta", format!("must be positive (got {delta})")));
    }
    let (plus, _) = tls_staying_probabilities(protocol, delta, tol)?;
    Ok(plus.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct StrokeKey {
    delta: Option<u64>,
    omega_start: u64,
    omega_end: u64,
    duration: u64,
    family: ProtocolFamily,
    tol: u64,
}

/// Memo of stroke nonadiabaticities shared between sweep workers.
#[derive(Debug, Default)]
pub struct QCache {
    map: RwLock<HashMap<StrokeKey, f64>>,
}

impl QCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Q of one stroke, computed on a miss.
    pub fn stroke_q(&self, substance: WorkingSubstance, protocol: &WorkProtocol, tol: f64) -> Result<f64> {
        let key = StrokeKey {
            delta: match substance {
                WorkingSubstance::HarmonicOscillator => None,
                WorkingSubstance::TwoLevel { delta } => Some(delta.to_bits()),
            },
            omega_start: protocol.omega_start().to_bits(),
            omega_end: protocol.omega_end().to_bits(),
            duration: protocol.duration().to_bits(),
            family: protocol.family(),
            tol: tol.to_bits(),
        };
        if let Some(q) = self.map.read().ok().and_then(|m| m.get(&key).copied()) {
            return Ok(q);
        }
        let q = stroke_q(substance, protocol, tol)?;
        if let Ok(mut m) = self.map.write() {
            m.insert(key, q);
        }
        Ok(q)
    }
}

fn stroke_q(substance: WorkingSubstance, protocol: &WorkProtocol, tol: f64) -> Result<f64> {
    match substance {
        WorkingSubstance::HarmonicOscillator => ho_q(protocol, tol),
        WorkingSubstance::TwoLevel { delta } => tls_q(protocol, delta, tol),
    }
}

fn stroke_protocols(config: &EngineConfig) -> Result<(WorkProtocol, WorkProtocol)> {
    let (compression, expansion) = config.work_stroke_durations();
    Ok((
        make_linear_protocol(config.omega1, config.omega2, compression)?,
        make_linear_protocol(config.omega2, config.omega1, expansion)?,
    ))
}

/// `Q_f` from the compression sweep `ω₁ → ω₂` over `r_u τ_u` and `Q_b` from the
/// expansion sweep `ω₂ → ω₁` over `(1 - r_u) τ_u`, both linear in `ω²`.
pub fn adiabaticity_pair(config: &EngineConfig) -> Result<AdiabaticityPair> {
    config.validate()?;
    let (f, b) = stroke_protocols(config)?;
    let tol = config.numerics.ode_tol;
    Ok(AdiabaticityPair {
        q_f: stroke_q(config.substance, &f, tol)?,
        q_b: stroke_q(config.substance, &b, tol)?,
    })
}

/// [`adiabaticity_pair`] through a shared cache.
pub fn adiabaticity_pair_cached(config: &EngineConfig, cache: &QCache) -> Result<AdiabaticityPair> {
    config.validate()?;
    let (f, b) = stroke_protocols(config)?;
    let tol = config.numerics.ode_tol;
    Ok(AdiabaticityPair {
        q_f: cache.stroke_q(config.substance, &f, tol)?,
        q_b: cache.stroke_q(config.substance, &b, tol)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::sudden_quench_q_ho;
    use proptest::prelude::*;

    const TOL: f64 = 1e-10;

    #[test]
    fn constant_protocol_is_adiabatic() {
        for d in [0.3, 2.0, 17.5] {
            let p = make_linear_protocol(1.0, 1.0, d).unwrap();
            assert!((ho_q(&p, TOL).unwrap() - 1.0).abs() < 1e-9);
            let p = make_linear_protocol(1.3, 1.3, d).unwrap();
            assert!((tls_q(&p, 0.7, TOL).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sudden_limit_matches_quench_formula() {
        let p = make_linear_protocol(1.0, 2.0, 1e-4).unwrap();
        let q = ho_q(&p, TOL).unwrap();
        assert!((q - sudden_quench_q_ho(1.0, 2.0)).abs() < 1e-6, "{q}");
        assert!((q - 1.25).abs() < 1e-6);
    }

    #[test]
    fn slow_sweep_is_nearly_adiabatic() {
        let q_slow = ho_q(&make_linear_protocol(1.0, 2.0, 200.0).unwrap(), TOL).unwrap();
        assert!(q_slow - 1.0 < 1e-4, "{q_slow}");
        let q_tls = tls_q(&make_linear_protocol(1.0, 2.0, 200.0).unwrap(), 1.0, TOL).unwrap();
        assert!(1.0 - q_tls < 1e-4, "{q_tls}");
    }

    #[test]
    fn tls_sudden_overlap() {
        // mixing angles atan(δ/ω) at ω = 1 and ω = 2
        let (t1, t2) = (1f64.atan2(1.0), 1f64.atan2(2.0));
        let expected = (0.5 * (t1 - t2)).cos().powi(2);
        let q = tls_q(&make_linear_protocol(1.0, 2.0, 1e-5).unwrap(), 1.0, TOL).unwrap();
        assert!((q - expected).abs() < 1e-6, "{q} vs {expected}");
        assert!((expected - 0.9743).abs() < 5e-5);
    }

    #[test]
    fn tls_staying_probabilities_agree() {
        for d in [0.1, 1.0, 3.7, 12.0] {
            let p = make_linear_protocol(1.0, 2.0, d).unwrap();
            let (plus, minus) = tls_staying_probabilities(&p, 1.0, TOL).unwrap();
            assert!((plus - minus).abs() < 1e-9, "{plus} {minus}");
        }
    }

    #[test]
    fn wronskian_is_conserved() {
        let p = make_linear_protocol(1.0, 2.0, 37.0).unwrap();
        let [x, xd, y, yd] = ho_trajectories(&p, TOL).unwrap();
        assert!((xd * y - x * yd - 1.0).abs() < 1e-8);
    }

    #[test]
    fn reversed_sweep_has_same_q() {
        // time-reversal invariance of real Hamiltonians
        for d in [0.4, 2.5, 7.3] {
            let p = make_linear_protocol(1.0, 2.0, d).unwrap();
            let a = ho_q(&p, TOL).unwrap();
            let b = ho_q(&p.reversed(), TOL).unwrap();
            assert!((a - b).abs() < 1e-8, "{a} {b}");
            let a = tls_q(&p, 1.0, TOL).unwrap();
            let b = tls_q(&p.reversed(), 1.0, TOL).unwrap();
            assert!((a - b).abs() < 1e-8, "{a} {b}");
        }
    }

    #[test]
    fn pair_limits() {
        let cfg = EngineConfig::harmonic(2.0, 0.1, 0.5).with_tau_u(1e-4);
        let pair = adiabaticity_pair(&cfg).unwrap();
        assert!((pair.q_f - 1.25).abs() < 1e-6 && (pair.q_b - 1.25).abs() < 1e-6);

        let cfg = cfg.with_tau_u(400.0).with_r_u(0.3);
        let pair = adiabaticity_pair(&cfg).unwrap();
        assert!(pair.q_f - 1.0 < 1e-4 && pair.q_b - 1.0 < 1e-4);
    }

    #[test]
    fn pair_regression_fixture() {
        // self-generated anchors at ω₂ = 2ω₁, ω₁τ_u = 5, r_u = 0.5
        let cfg = EngineConfig::harmonic(2.0, 0.1, 0.5).with_tau_u(5.0);
        let pair = adiabaticity_pair(&cfg).unwrap();
        assert!((pair.q_f - HO_FIXTURE).abs() < 1e-9, "{:.12}", pair.q_f);
        assert!((pair.q_b - HO_FIXTURE).abs() < 1e-9, "{:.12}", pair.q_b);

        let cfg = EngineConfig::two_level(2.0, 1.0, 0.1, 0.5).with_tau_u(5.0);
        let pair = adiabaticity_pair(&cfg).unwrap();
        assert!((pair.q_f - TLS_FIXTURE).abs() < 1e-9, "{:.12}", pair.q_f);
        assert!((pair.q_b - TLS_FIXTURE).abs() < 1e-9, "{:.12}", pair.q_b);
    }

    const HO_FIXTURE: f64 = 1.027487666858;
    const TLS_FIXTURE: f64 = 0.997375079890;

    #[test]
    fn cache_deduplicates() {
        let cache = QCache::new();
        let cfg = EngineConfig::harmonic(2.0, 0.1, 0.5).with_tau_u(3.0);
        let a = adiabaticity_pair_cached(&cfg, &cache).unwrap();
        assert_eq!(cache.len(), 2);
        let b = adiabaticity_pair_cached(&cfg, &cache).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(a, b);
        assert_eq!(a, adiabaticity_pair(&cfg).unwrap());
    }

    #[test]
    fn tightening_tolerance_converges() {
        for d in [0.7, 4.0, 15.0] {
            let p = make_linear_protocol(1.0, 2.0, d).unwrap();
            let coarse = ho_q(&p, 1e-9).unwrap();
            let fine = ho_q(&p, 1e-10).unwrap();
            assert!((coarse - fine).abs() < 1e-8, "{d}: {coarse} {fine}");
            let coarse = tls_q(&p, 1.0, 1e-9).unwrap();
            let fine = tls_q(&p, 1.0, 1e-10).unwrap();
            assert!((coarse - fine).abs() < 1e-8, "{d}: {coarse} {fine}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn ho_q_at_least_one(ratio in 1.1f64..3.0, d in 0.01f64..30.0, up in any::<bool>()) {
            let p = if up {
                make_linear_protocol(1.0, ratio, d).unwrap()
            } else {
                make_linear_protocol(ratio, 1.0, d).unwrap()
            };
            let q = ho_q(&p, TOL).unwrap();
            prop_assert!(q >= 1.0 - 10.0 * TOL);
            let [x, xd, y, yd] = ho_trajectories(&p, TOL).unwrap();
            prop_assert!((xd * y - x * yd - 1.0).abs() < 1e-8);
        }

        #[test]
        fn tls_q_is_probability(ratio in 1.1f64..3.0, d in 0.01f64..30.0, delta in 0.1f64..2.0) {
            let p = make_linear_protocol(1.0, ratio, d).unwrap();
            let q = tls_q(&p, delta, TOL).unwrap();
            prop_assert!((0.0..=1.0).contains(&q));
            let u = tls_propagator(&p, delta, TOL).unwrap();
            let n0: f64 = [u[0], u[2]].iter().map(|[r, i]| r * r + i * i).sum();
            prop_assert!((n0 - 1.0).abs() < 1e-8);
        }
    }
}
