//! Limit cycle of the engine with finite-time heat strokes.

use nalgebra::{DMatrix, DVector};

use crate::charfn::Moments;
use crate::config::EngineConfig;
use crate::error::{OttoError, Result};
use crate::kernels::{thermal_kernel, unitary_kernel, StochasticMatrix};
use crate::nonadiabatic::{adiabaticity_pair, AdiabaticityPair};
use crate::stats::CycleStatistics;

/// Convergence threshold on the normalized power-iteration step.
pub const STATIONARY_TOL: f64 = 1e-12;
/// Iteration budget of the power method.
pub const MAX_POWER_ITERATIONS: usize = 100_000;

/// Hot and cold heat-stroke kernels. They depend on `tau_b` but not on the
/// work strokes, so sweeps over `r_u` can share them.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalKernels {
    /// `T_{β_h}` at `omega2` for `r_b τ_b`.
    pub hot: StochasticMatrix,
    /// `T_{β_c}` at `omega1` for `(1 - r_b) τ_b`.
    pub cold: StochasticMatrix,
}

impl ThermalKernels {
    pub fn new(config: &EngineConfig) -> Result<Self> {
        let (hot_time, cold_time) = config.heat_stroke_durations();
        let rate = match config.substance {
            crate::config::WorkingSubstance::HarmonicOscillator => config.kappa,
            crate::config::WorkingSubstance::TwoLevel { .. } => config.gamma,
        };
        Ok(ThermalKernels {
            hot: thermal_kernel(config.substance, hot_time, config.omega2, config.beta_h, rate, config.n_cut)?,
            cold: thermal_kernel(config.substance, cold_time, config.omega1, config.beta_c, rate, config.n_cut)?,
        })
    }
}

/// The four stroke kernels and their composition
/// `T_cyc = T_{β_c} · T_II · T_{β_h} · T_I` over the `omega1` eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleMatrix {
    pub t_cyc: StochasticMatrix,
    pub compression: StochasticMatrix,
    pub hot: StochasticMatrix,
    pub expansion: StochasticMatrix,
    pub cold: StochasticMatrix,
}

/// Builds the cycle matrix for a config with finite `tau_b` (infinite is
/// accepted and yields Gibbs columns).
pub fn build_cycle_matrix(config: &EngineConfig, pair: AdiabaticityPair) -> Result<CycleMatrix> {
    config.validate()?;
    let thermal = ThermalKernels::new(config)?;
    build_cycle_matrix_with(config, pair, &thermal)
}

/// [`build_cycle_matrix`] with precomputed heat-stroke kernels.
pub fn build_cycle_matrix_with(
    config: &EngineConfig,
    pair: AdiabaticityPair,
    thermal: &ThermalKernels,
) -> Result<CycleMatrix> {
    let compression = unitary_kernel(config.substance, pair.q_f, config.n_cut)?;
    let expansion = unitary_kernel(config.substance, pair.q_b, config.n_cut)?;
    let t_cyc = thermal
        .cold
        .then_after(&expansion)
        .then_after(&thermal.hot)
        .then_after(&compression);
    Ok(CycleMatrix {
        t_cyc,
        compression,
        hot: thermal.hot.clone(),
        expansion,
        cold: thermal.cold.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationaryMethod {
    PowerIteration,
    /// Direct solve of `(T - I)p = 0` with a normalization row, then polished
    /// by power steps.
    LinearSolve,
}

/// Limit-cycle populations at the start of the compression stroke.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub p1: Vec<f64>,
    /// `‖T p / Σ(T p) - p‖₁` at the returned vector.
    pub residual: f64,
    /// Probability lost past the cutoff in one cycle, `1 - Σ(T p)`.
    pub leakage: f64,
    /// `1 -` the observed contraction ratio of the power iteration.
    pub spectral_gap: f64,
    pub iterations: usize,
    pub method: StationaryMethod,
}

struct PowerRun {
    p: DVector<f64>,
    residual: f64,
    ratio: f64,
    iterations: usize,
}

fn normalized_step(t: &DMatrix<f64>, p: &DVector<f64>) -> DVector<f64> {
    let q = t * p;
    let s = q.sum();
    q / s
}

/// Power iteration; stops early with `None` if the observed contraction
/// predicts more than the remaining budget.
fn power_run(t: &DMatrix<f64>, start: DVector<f64>, budget: usize) -> Option<PowerRun> {
    let mut p = start;
    let mut prev_residual = f64::INFINITY;
    let mut ratio = 0.0;
    for k in 1..=budget {
        let q = normalized_step(t, &p);
        let residual = (&q - &p).lp_norm(1);
        p = q;
        if prev_residual.is_finite() && prev_residual > 0.0 {
            ratio = residual / prev_residual;
        }
        if residual < STATIONARY_TOL {
            return Some(PowerRun { p, residual, ratio, iterations: k });
        }
        if k >= 64 && k % 64 == 0 && ratio > 0.0 && ratio < 1.0 {
            let needed = (STATIONARY_TOL / residual).ln() / ratio.ln();
            if needed > 10_000.0 || needed > (budget - k) as f64 {
                return None;
            }
        }
        if k >= 64 && ratio >= 1.0 - 1e-6 {
            return None;
        }
        prev_residual = residual;
    }
    None
}

fn linear_solve(t: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = t.nrows();
    let mut a = t - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    a.lu()
        .solve(&rhs)
        .ok_or_else(|| OttoError::DegenerateCycle {
            detail: "(T - I) has a multi-dimensional null space".into(),
        })
}

/// Stationary populations of the cycle.
///
/// A strictly positive `T_cyc` has a unique fixed point. Otherwise the power
/// method is run from two different starts and a disagreement is reported as
/// a degenerate cycle.
pub fn stationary_distribution(cycle: &CycleMatrix) -> Result<StationaryDistribution> {
    let t = cycle.t_cyc.matrix();
    let n = t.nrows();
    let uniform = DVector::from_element(n, 1.0 / n as f64);
    let positive = t.min() > 0.0;

    let (p, residual, ratio, iterations, method) = match power_run(t, uniform.clone(), MAX_POWER_ITERATIONS) {
        Some(run) => (run.p, run.residual, run.ratio, run.iterations, StationaryMethod::PowerIteration),
        None => {
            let mut p = linear_solve(t)?;
            if p.iter().any(|x| !x.is_finite()) {
                return Err(OttoError::numerical("stationary", "linear solve produced non-finite populations"));
            }
            let mut residual = f64::INFINITY;
            for _ in 0..8 {
                let q = normalized_step(t, &p);
                residual = (&q - &p).lp_norm(1);
                p = q;
            }
            (p, residual, f64::NAN, 0, StationaryMethod::LinearSolve)
        }
    };

    if !positive {
        let mut e0 = DVector::zeros(n);
        e0[0] = 1.0;
        let other = power_run(t, e0, MAX_POWER_ITERATIONS).map(|r| r.p);
        let differs = match &other {
            Some(q) => (q - &p).lp_norm(1) > 1e-8,
            None => true,
        };
        if differs {
            return Err(OttoError::DegenerateCycle {
                detail: "power iteration from uniform and ground-state starts disagree".into(),
            });
        }
    }

    let min = p.min();
    if min < -1e-12 {
        return Err(OttoError::numerical("stationary", format!("negative population {min:.3e}")));
    }
    let mut p = p.map(|x| x.max(0.0));
    p /= p.sum();
    if !(residual < 1e-8) {
        return Err(OttoError::numerical(
            "stationary",
            format!("fixed-point residual {residual:.3e} after {iterations} iterations (contraction ratio {ratio:.6})"),
        ));
    }
    let leakage = 1.0 - (t * &p).sum();
    Ok(StationaryDistribution {
        p1: p.as_slice().to_vec(),
        residual,
        leakage,
        spectral_gap: 1.0 - ratio,
        iterations,
        method,
    })
}

/// All joint moments `⟨wᵖ q_hˢ⟩` with `p + s ≤ 2` by staged summation over the
/// stroke kernels, starting from `p1`.
///
/// Each stage carries partial moments of the accumulated work and heat per
/// level, so the cost is quadratic in the basis size.
pub fn moments_by_summation(config: &EngineConfig, cycle: &CycleMatrix, p1: &[f64]) -> Moments {
    let (e1, e2) = config.energies();
    let n = p1.len();
    let (ti, th, tii) = (cycle.compression.matrix(), cycle.hot.matrix(), cycle.expansion.matrix());

    // a[j][m] = Σ_n (ε_m - ε_n)^j T_I(m,n) p1(n)
    let mut a = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for m in 0..n {
        for (k, &pk) in p1.iter().enumerate() {
            let w = ti[(m, k)] * pk;
            if w == 0.0 {
                continue;
            }
            let d = e2[m] - e1[k];
            a[0][m] += w;
            a[1][m] += w * d;
            a[2][m] += w * d * d;
        }
    }
    // b[(j, c)][k] = Σ_m T_h(k,m) (ε_k - ε_m)^c a[j][m], j + c ≤ 2
    let orders: [(usize, i32); 6] = [(0, 0), (1, 0), (2, 0), (0, 1), (0, 2), (1, 1)];
    let mut b = vec![vec![0.0; n]; orders.len()];
    for k in 0..n {
        for m in 0..n {
            let t = th[(k, m)];
            if t == 0.0 {
                continue;
            }
            let c = e2[k] - e2[m];
            for (slot, &(j, ch)) in orders.iter().enumerate() {
                b[slot][k] += t * c.powi(ch) * a[j][m];
            }
        }
    }
    let slot = |j: usize, c: i32| orders.iter().position(|&o| o == (j, c)).unwrap();
    let (b00, b10, b20, b01, b02, b11) = (
        &b[slot(0, 0)],
        &b[slot(1, 0)],
        &b[slot(2, 0)],
        &b[slot(0, 1)],
        &b[slot(0, 2)],
        &b[slot(1, 1)],
    );
    // stroke II adds ε_l - ε_k to the work
    let mut out = Moments { w: 0.0, w2: 0.0, qh: 0.0, qh2: 0.0, w_qh: 0.0 };
    for l in 0..n {
        for k in 0..n {
            let t = tii[(l, k)];
            if t == 0.0 {
                continue;
            }
            let d = e1[l] - e2[k];
            out.w += t * (b10[k] + d * b00[k]);
            out.w2 += t * (b20[k] + 2.0 * d * b10[k] + d * d * b00[k]);
            out.qh += t * b01[k];
            out.qh2 += t * b02[k];
            out.w_qh += t * (b11[k] + d * b01[k]);
        }
    }
    out
}

/// One moment `⟨wᵖ q_hˢ⟩` by summation from populations `p1`.
pub fn moment_by_summation(config: &EngineConfig, pair: AdiabaticityPair, p1: &[f64], p: usize, s: usize) -> Result<f64> {
    if p + s > 2 {
        return Err(OttoError::validation("order", format!("p + s must be <= 2 (got {p} + {s})")));
    }
    if p1.len() != config.substance.levels(config.n_cut) {
        return Err(OttoError::validation("p1", "population vector does not match the basis size"));
    }
    let cycle = build_cycle_matrix(config, pair)?;
    if p + s == 0 {
        let after = cycle.expansion.apply(&cycle.hot.apply(&cycle.compression.apply(p1)));
        return Ok(after.iter().sum());
    }
    let m = moments_by_summation(config, &cycle, p1);
    Ok(match (p, s) {
        (1, 0) => m.w,
        (2, 0) => m.w2,
        (0, 1) => m.qh,
        (0, 2) => m.qh2,
        _ => m.w_qh,
    })
}

/// Statistics together with the limit-cycle diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteCycle {
    pub pair: AdiabaticityPair,
    pub stationary: StationaryDistribution,
    pub stats: CycleStatistics,
}

/// Limit-cycle statistics from precomputed Q values and heat-stroke kernels.
pub fn finite_cycle_with(config: &EngineConfig, pair: AdiabaticityPair, thermal: &ThermalKernels) -> Result<FiniteCycle> {
    let cycle = build_cycle_matrix_with(config, pair, thermal)?;
    let stationary = stationary_distribution(&cycle)?;
    if stationary.leakage > config.numerics.max_leakage {
        return Err(OttoError::Truncation {
            n_cut: config.n_cut,
            leakage: stationary.leakage,
            limit: config.numerics.max_leakage,
        });
    }
    let moments = moments_by_summation(config, &cycle, &stationary.p1);
    Ok(FiniteCycle {
        pair,
        stats: CycleStatistics::from_moments(&moments)?,
        stationary,
    })
}

/// Limit-cycle statistics for the full config.
pub fn finite_cycle(config: &EngineConfig) -> Result<FiniteCycle> {
    let pair = adiabaticity_pair(config)?;
    let thermal = ThermalKernels::new(config)?;
    finite_cycle_with(config, pair, &thermal)
}

/// Work and efficiency statistics in the limit cycle with heat strokes of
/// total duration `tau_b`.
pub fn statistics_finite(config: &EngineConfig) -> Result<CycleStatistics> {
    Ok(finite_cycle(config)?.stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorkingSubstance;
    use crate::stats::statistics_perfect_with;

    fn tls(tau_b: f64) -> EngineConfig {
        EngineConfig::two_level(2.0, 1.0, 0.1, 0.5).with_tau_b(tau_b).with_tau_u(1.3).with_r_u(0.4).with_r_b(0.3)
    }

    /// Exhaustive enumeration of the 16 two-level measurement records.
    fn tls_enumeration(config: &EngineConfig, cycle: &CycleMatrix, p1: &[f64]) -> Moments {
        let (e1, e2) = config.energies();
        let mut m = Moments { w: 0.0, w2: 0.0, qh: 0.0, qh2: 0.0, w_qh: 0.0 };
        for n in 0..2 {
            for mm in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let prob = p1[n]
                            * cycle.compression.get(mm, n)
                            * cycle.hot.get(k, mm)
                            * cycle.expansion.get(l, k);
                        let w = e2[mm] - e1[n] + e1[l] - e2[k];
                        let q = e2[k] - e2[mm];
                        m.w += prob * w;
                        m.w2 += prob * w * w;
                        m.qh += prob * q;
                        m.qh2 += prob * q * q;
                        m.w_qh += prob * w * q;
                    }
                }
            }
        }
        m
    }

    #[test]
    fn tls_summation_matches_enumeration() {
        let config = tls(7.0);
        let pair = AdiabaticityPair::new(0.83, 0.91);
        let cycle = build_cycle_matrix(&config, pair).unwrap();
        let st = stationary_distribution(&cycle).unwrap();
        let a = moments_by_summation(&config, &cycle, &st.p1);
        let b = tls_enumeration(&config, &cycle, &st.p1);
        for (x, y) in [(a.w, b.w), (a.w2, b.w2), (a.qh, b.qh), (a.qh2, b.qh2), (a.w_qh, b.w_qh)] {
            assert!((x - y).abs() < 1e-14, "{x} {y}");
        }
    }

    #[test]
    fn tls_stationary_closed_form() {
        let config = tls(7.0);
        let cycle = build_cycle_matrix(&config, AdiabaticityPair::new(0.83, 0.91)).unwrap();
        let st = stationary_distribution(&cycle).unwrap();
        // 2×2 column-stochastic: p = (T(0,1), T(1,0)) / (T(0,1) + T(1,0))
        let (a, b) = (cycle.t_cyc.get(0, 1), cycle.t_cyc.get(1, 0));
        assert!((st.p1[0] - a / (a + b)).abs() < 1e-12);
        assert!((st.p1[1] - b / (a + b)).abs() < 1e-12);
        assert_eq!(st.method, StationaryMethod::PowerIteration);
    }

    #[test]
    fn tls_cycle_matrix_closed_form() {
        // relaxation factors compose: T_th = g 1ᵀ (1 - d) + I d
        let config = tls(7.0);
        let (qf, qb) = (0.83, 0.91);
        let cycle = build_cycle_matrix(&config, AdiabaticityPair::new(qf, qb)).unwrap();
        let (e1, e2) = config.energies();
        let dh = (-2.0 * config.gamma * config.r_b * config.tau_b).exp();
        let dc = (-2.0 * config.gamma * (1.0 - config.r_b) * config.tau_b).exp();
        let gh = 1.0 / (1.0 + (-2.0 * config.beta_h * e2[1]).exp());
        let gc = 1.0 / (1.0 + (-2.0 * config.beta_c * e1[1]).exp());
        let mat = |d: f64, g: f64| DMatrix::from_row_slice(2, 2, &[d + (1.0 - d) * g, (1.0 - d) * g, (1.0 - d) * (1.0 - g), d + (1.0 - d) * (1.0 - g)]);
        let u = |q: f64| DMatrix::from_row_slice(2, 2, &[q, 1.0 - q, 1.0 - q, q]);
        let expected = mat(dc, gc) * u(qb) * mat(dh, gh) * u(qf);
        assert!((cycle.t_cyc.matrix() - expected).abs().max() < 1e-12);
    }

    #[test]
    fn long_heat_strokes_reproduce_perfect_thermalization() {
        for config in [
            EngineConfig::harmonic(2.0, 0.5, 1.5).with_n_cut(60).with_tau_b(5000.0),
            EngineConfig::two_level(2.0, 1.0, 0.1, 0.5).with_tau_b(5000.0),
        ] {
            let pair = match config.substance {
                WorkingSubstance::HarmonicOscillator => AdiabaticityPair::new(1.07, 1.12),
                _ => AdiabaticityPair::new(0.93, 0.88),
            };
            let fin = finite_cycle_with(&config, pair, &ThermalKernels::new(&config).unwrap()).unwrap().stats;
            let per = statistics_perfect_with(&config, pair).unwrap();
            assert!((fin.work_output / per.work_output - 1.0).abs() < 1e-6);
            assert!((fin.w_var / per.w_var - 1.0).abs() < 1e-6);
            assert!((fin.qh_mean / per.qh_mean - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn infinite_heat_strokes_give_gibbs_columns() {
        let config = EngineConfig::harmonic(2.0, 0.5, 1.5).with_n_cut(60);
        let cycle = build_cycle_matrix(&config, AdiabaticityPair::new(1.1, 1.2)).unwrap();
        let gibbs = config.substance.gibbs(config.beta_c, config.omega1, 60);
        for col in 0..10 {
            for row in 0..60 {
                assert!((cycle.t_cyc.get(row, col) - gibbs[row]).abs() < 1e-12);
            }
        }
        let st = stationary_distribution(&cycle).unwrap();
        for (p, g) in st.p1.iter().zip(&gibbs) {
            assert!((p - g).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_heat_strokes_leave_unitary_fixed_point() {
        let config = tls(0.0);
        let cycle = build_cycle_matrix(&config, AdiabaticityPair::new(0.8, 0.7)).unwrap();
        let st = stationary_distribution(&cycle).unwrap();
        assert!((st.p1[0] - 0.5).abs() < 1e-12);

        let stuck = build_cycle_matrix(&config, AdiabaticityPair::ADIABATIC).unwrap();
        assert_eq!(stuck.t_cyc, StochasticMatrix::identity(2));
        assert!(matches!(stationary_distribution(&stuck), Err(OttoError::DegenerateCycle { .. })));

        // oscillator parity sectors never mix without a bath
        let ho = EngineConfig::harmonic(2.0, 0.5, 1.5).with_tau_b(0.0);
        let cycle = build_cycle_matrix(&ho, AdiabaticityPair::new(1.01, 1.02)).unwrap();
        assert!(matches!(stationary_distribution(&cycle), Err(OttoError::DegenerateCycle { .. })));
    }

    #[test]
    fn stationary_is_fixed_point() {
        let config = EngineConfig::harmonic(2.0, 0.5, 1.5).with_tau_b(200.0).with_tau_u(2.0).with_n_cut(60);
        let fc = finite_cycle(&config).unwrap();
        let cycle = build_cycle_matrix(&config, fc.pair).unwrap();
        let next = cycle.t_cyc.apply(&fc.stationary.p1);
        let diff: f64 = next.iter().zip(&fc.stationary.p1).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff < 1e-8, "{diff}");
        assert!(fc.stationary.p1.iter().all(|&x| x >= 0.0));
        assert!((fc.stationary.p1.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn weak_contraction_falls_back_to_linear_solve() {
        // γτ_b tiny and no mixing by the work strokes: power iteration would crawl
        let config = tls(0.05);
        let pair = AdiabaticityPair::ADIABATIC;
        let cycle = build_cycle_matrix(&config, pair).unwrap();
        let st = stationary_distribution(&cycle).unwrap();
        assert_eq!(st.method, StationaryMethod::LinearSolve);
        assert!(st.residual < 1e-10);
        let next = cycle.t_cyc.apply(&st.p1);
        let s: f64 = next.iter().sum();
        let diff: f64 = next.iter().zip(&st.p1).map(|(a, b)| (a / s - b).abs()).sum();
        assert!(diff < 1e-10);
    }

    #[test]
    fn normalization_moment() {
        let config = tls(3.0);
        let p1 = [0.6, 0.4];
        let z = moment_by_summation(&config, AdiabaticityPair::new(0.9, 0.9), &p1, 0, 0).unwrap();
        assert!((z - 1.0).abs() < 1e-15);
        assert!(moment_by_summation(&config, AdiabaticityPair::new(0.9, 0.9), &p1, 2, 1).is_err());
    }
}
