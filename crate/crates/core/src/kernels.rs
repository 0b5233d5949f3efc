//! Population transition matrices for the four strokes.
//!
//! Every matrix is indexed `(out, in)`: entry `(m, n)` is the probability of
//! ending in level `m` given level `n`. Columns therefore sum to one, up to
//! probability that leaks past the oscillator cutoff.

use nalgebra::{DMatrix, DVector};

use crate::config::WorkingSubstance;
use crate::error::{OttoError, Result};
use crate::special::{ln_factorials, scaled_terminating_2f1};

/// Default bound on truncation leakage for kernels built at a given `n_cut`.
pub const DEFAULT_MAX_LEAKAGE: f64 = 1e-6;

/// A column-(sub)stochastic matrix in the `(out, in)` convention.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
}

impl StochasticMatrix {
    pub fn from_matrix(entries: DMatrix<f64>) -> Self {
        assert!(entries.is_square(), "transition matrices are square");
        StochasticMatrix { entries }
    }

    pub fn identity(n: usize) -> Self {
        StochasticMatrix {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Probability of `out` given `input`.
    pub fn get(&self, out: usize, input: usize) -> f64 {
        self.entries[(out, input)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.entries.column_iter().map(|c| c.sum()).collect()
    }

    /// Largest `1 - column sum` over the first `columns` columns.
    pub fn leakage(&self, columns: usize) -> f64 {
        self.entries
            .column_iter()
            .take(columns)
            .map(|c| 1.0 - c.sum())
            .fold(0.0, f64::max)
    }

    /// Fails if any column below `dim / 2` leaks more than `limit`.
    pub fn ensure_leakage_below(&self, limit: f64) -> Result<()> {
        let leakage = self.leakage(self.dim().div_ceil(2));
        if leakage > limit {
            Err(OttoError::Truncation {
                n_cut: self.dim(),
                leakage,
                limit,
            })
        } else {
            Ok(())
        }
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.min()
    }

    /// `self · other`: run `other` first, then `self`.
    pub fn then_after(&self, other: &StochasticMatrix) -> StochasticMatrix {
        StochasticMatrix {
            entries: &self.entries * &other.entries,
        }
    }

    /// Propagates a population vector through the stroke.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let v = &self.entries * DVector::from_column_slice(p);
        v.as_slice().to_vec()
    }
}

fn half_integer_ratios(n: usize) -> (Vec<f64>, Vec<f64>) {
    // even m = 2j: Γ((m+1)/2) / (√π Γ(m/2+1)) = C(2j, j) / 4^j
    // odd m = 2j+1: Γ(m/2+1) / (√π Γ((m+1)/2)) = (j + 1/2) C(2j, j) / 4^j
    let half = n / 2 + 1;
    let mut central = Vec::with_capacity(half);
    let mut g = 1.0;
    for j in 0..half {
        if j > 0 {
            g *= (2 * j - 1) as f64 / (2 * j) as f64;
        }
        central.push(g);
    }
    let odd = central.iter().enumerate().map(|(j, g)| (j as f64 + 0.5) * g).collect();
    (central, odd)
}

/// Oscillator work-stroke transitions for nonadiabaticity `q`, without the
/// leakage check.
pub fn ho_unitary_entries(q: f64, n_cut: usize) -> Result<StochasticMatrix> {
    if !(q >= 1.0 - 1e-12) || !q.is_finite() {
        return Err(OttoError::validation("q", format!("oscillator Q must be >= 1 (got {q})")));
    }
    if n_cut < 2 {
        return Err(OttoError::validation("n_cut", format!("must be at least 2 (got {n_cut})")));
    }
    if (q - 1.0).abs() < 1e-8 {
        return Ok(StochasticMatrix::identity(n_cut));
    }
    let z = 2.0 / (1.0 - q);
    let rho = (q - 1.0) / (q + 1.0);
    let (even, odd) = half_integer_ratios(n_cut);
    let even_pref = (2.0 / (q + 1.0)).sqrt();
    let odd_pref = 2f64.powf(3.5) / (q + 1.0).powf(1.5);

    let mut t = DMatrix::zeros(n_cut, n_cut);
    for m in 0..n_cut {
        for n in (m % 2..=m).step_by(2) {
            let value = if m % 2 == 0 {
                // ρ^{(m+n)/2} F² = (ρ^{(m+n)/4} F)²
                let s = scaled_terminating_2f1(
                    -(m as f64) / 2.0,
                    -(n as f64) / 2.0,
                    0.5,
                    z,
                    rho,
                    (m + n) as f64 / 4.0,
                );
                even_pref * even[m / 2] * even[n / 2] * s * s
            } else {
                let s = scaled_terminating_2f1(
                    (1.0 - m as f64) / 2.0,
                    (1.0 - n as f64) / 2.0,
                    1.5,
                    z,
                    rho,
                    ((m + n) as f64 / 2.0 - 1.0) / 2.0,
                );
                odd_pref * odd[m / 2] * odd[n / 2] * s * s
            };
            t[(m, n)] = value;
            t[(n, m)] = value;
        }
    }
    Ok(StochasticMatrix { entries: t })
}

/// Oscillator work-stroke transitions for nonadiabaticity `q`.
///
/// Only levels of equal parity connect. `|q - 1| < 1e-8` gives the identity.
pub fn ho_unitary_kernel(q: f64, n_cut: usize) -> Result<StochasticMatrix> {
    let t = ho_unitary_entries(q, n_cut)?;
    t.ensure_leakage_below(DEFAULT_MAX_LEAKAGE)?;
    Ok(t)
}

/// Mean thermal occupation `1/(e^{βω} - 1)`.
pub fn bose_occupation(beta: f64, omega: f64) -> f64 {
    1.0 / (beta * omega).exp_m1()
}

/// Oscillator heat-stroke transitions after time `tau` in contact with a bath,
/// without the leakage check.
///
/// The damped-oscillator channel with `θ = e^{-2κτ}` factors into a pure-loss
/// channel with transmissivity `η = θ/G` followed by a quantum-limited
/// amplifier with gain `G = 1 + n̄(1 - θ)`. Both factors have non-negative
/// Fock-space transition probabilities, so the composed sum has no
/// cancellation at any index.
pub fn ho_thermal_entries(tau: f64, omega: f64, beta: f64, kappa: f64, n_cut: usize) -> Result<StochasticMatrix> {
    if !(tau >= 0.0) {
        return Err(OttoError::validation("tau", format!("must be non-negative (got {tau})")));
    }
    if !(kappa > 0.0) {
        return Err(OttoError::validation("kappa", format!("must be positive (got {kappa})")));
    }
    if tau == 0.0 {
        return Ok(StochasticMatrix::identity(n_cut));
    }
    let theta = (-2.0 * kappa * tau).exp();
    let occupation = bose_occupation(beta, omega);
    let gain = 1.0 + occupation * (1.0 - theta);
    let eta = theta / gain;

    let ln_fact = ln_factorials(n_cut);
    let ln_binom = |n: usize, k: usize| ln_fact[n] - ln_fact[k] - ln_fact[n - k];
    let (ln_eta, ln_loss) = (eta.ln(), (-eta).ln_1p());
    let ln_inv_gain = -gain.ln();
    // 1 - 1/G = n̄(1-θ)/G
    let ln_amp = (occupation * (1.0 - theta)).ln() + ln_inv_gain;

    let mut t = DMatrix::zeros(n_cut, n_cut);
    for l in 0..n_cut {
        for n in 0..n_cut {
            let mut sum = 0.0;
            for j in 0..=n.min(l) {
                // loss l -> j, then amplifier j -> n
                let mut ln_term = ln_binom(l, j) + ln_binom(n, j) + (j as f64 + 1.0) * ln_inv_gain;
                if j > 0 {
                    ln_term += j as f64 * ln_eta;
                }
                if l > j {
                    ln_term += (l - j) as f64 * ln_loss;
                }
                if n > j {
                    ln_term += (n - j) as f64 * ln_amp;
                }
                sum += ln_term.exp();
            }
            t[(n, l)] = sum;
        }
    }
    let out = StochasticMatrix { entries: t };
    if out.min_entry() < -1e-12 {
        return Err(OttoError::numerical(
            "ho_thermal_kernel",
            format!("negative transition probability {:.3e}", out.min_entry()),
        ));
    }
    Ok(out)
}

/// Oscillator heat-stroke transitions at damping rate `kappa`.
///
/// `tau = 0` is the identity; as `tau → ∞` every column approaches the
/// Gibbs distribution `(1 - ν) νⁿ` with `ν = e^{-βω}`.
pub fn ho_thermal_kernel(tau: f64, omega: f64, beta: f64, kappa: f64, n_cut: usize) -> Result<StochasticMatrix> {
    let t = ho_thermal_entries(tau, omega, beta, kappa, n_cut)?;
    t.ensure_leakage_below(DEFAULT_MAX_LEAKAGE)?;
    Ok(t)
}

/// Two-level work-stroke transitions: stay with probability `q`.
pub fn tls_unitary_kernel(q: f64) -> Result<StochasticMatrix> {
    if !(0.0..=1.0).contains(&q) {
        return Err(OttoError::validation("q", format!("staying probability must lie in [0, 1] (got {q})")));
    }
    Ok(StochasticMatrix {
        entries: DMatrix::from_row_slice(2, 2, &[q, 1.0 - q, 1.0 - q, q]),
    })
}

/// Two-level heat-stroke transitions for levels `±half_gap`.
///
/// Populations relax as `p(τ) = p_β + (p(0) - p_β) e^{-2γτ}`: the bath absorbs
/// at rate `2γ(1 - m̄)` and excites at rate `2γ m̄` with
/// `m̄ = 1/(e^{2βΔ} + 1)`, so the Gibbs state is the fixed point.
pub fn tls_thermal_kernel(tau: f64, half_gap: f64, beta: f64, gamma: f64) -> Result<StochasticMatrix> {
    if !(tau >= 0.0) {
        return Err(OttoError::validation("tau", format!("must be non-negative (got {tau})")));
    }
    if !(gamma > 0.0) {
        return Err(OttoError::validation("gamma", format!("must be positive (got {gamma})")));
    }
    let decay = if tau.is_infinite() { 0.0 } else { (-2.0 * gamma * tau).exp() };
    let excited = 1.0 / ((2.0 * beta * half_gap).exp() + 1.0);
    let ground = 1.0 - excited;
    let fill = 1.0 - decay;
    Ok(StochasticMatrix {
        entries: DMatrix::from_row_slice(
            2,
            2,
            &[
                decay + fill * ground,
                fill * ground,
                fill * excited,
                decay + fill * excited,
            ],
        ),
    })
}

/// Work-stroke kernel of either substance.
pub(crate) fn unitary_kernel(substance: WorkingSubstance, q: f64, n_cut: usize) -> Result<StochasticMatrix> {
    match substance {
        WorkingSubstance::HarmonicOscillator => ho_unitary_entries(q, n_cut),
        WorkingSubstance::TwoLevel { .. } => tls_unitary_kernel(q),
    }
}

/// Heat-stroke kernel of either substance at frequency `omega`.
pub(crate) fn thermal_kernel(
    substance: WorkingSubstance,
    tau: f64,
    omega: f64,
    beta: f64,
    rate: f64,
    n_cut: usize,
) -> Result<StochasticMatrix> {
    match substance {
        WorkingSubstance::HarmonicOscillator => ho_thermal_entries(tau, omega, beta, rate, n_cut),
        WorkingSubstance::TwoLevel { delta } => {
            tls_thermal_kernel(tau, WorkingSubstance::tls_half_gap(delta, omega), beta, rate)
        }
    }
}
