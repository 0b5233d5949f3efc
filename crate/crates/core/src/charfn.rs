//! Joint characteristic functions `G(α, ᾱ) = ⟨e^{iαw + iᾱq_h}⟩` of work and
//! hot-bath heat for one cycle with perfectly thermalizing heat strokes, and
//! moment extraction from them.

use num_complex::Complex64;

use crate::config::{EngineConfig, WorkingSubstance};
use crate::error::{OttoError, Result};
use crate::nonadiabatic::AdiabaticityPair;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Finite-difference step in `αω₁` units.
pub const FD_STEP: f64 = 1e-3;

fn cexp(z: Complex64) -> Complex64 {
    z.exp()
}

/// `1/√D(t)` at `t = 1` with the branch continued from the principal root at
/// `t = 0`, where `D(0)` is real and positive.
fn tracked_inv_sqrt(d: impl Fn(f64) -> Complex64) -> Result<Complex64> {
    let end = d(1.0);
    if end.re > 0.0 && d(0.5).re > 0.0 {
        return Ok(end.sqrt().inv());
    }
    const STEPS: usize = 256;
    let mut prev = d(0.0).sqrt();
    for k in 1..=STEPS {
        let mut s = d(k as f64 / STEPS as f64).sqrt();
        if (s - prev).norm() > (s + prev).norm() {
            s = -s;
        }
        if (s - prev).norm() > 0.5 * prev.norm() {
            return Err(OttoError::numerical(
                "branch tracking",
                format!("square-root branch jumps at t = {:.4}", k as f64 / STEPS as f64),
            ));
        }
        prev = s;
    }
    Ok(prev.inv())
}

fn ho_radicand(q: f64, x: Complex64, y: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    q * (one - x * x) * (one - y * y) + (one + x * x) * (one + y * y) - 4.0 * x * y
}

/// Characteristic function for the harmonic oscillator.
pub fn cf_ho(alpha: Complex64, alpha_bar: Complex64, pair: AdiabaticityPair, config: &EngineConfig) -> Result<Complex64> {
    if config.substance != WorkingSubstance::HarmonicOscillator {
        return Err(OttoError::validation("substance", "cf_ho needs the harmonic oscillator"));
    }
    if !(pair.q_f >= 1.0 - 1e-12 && pair.q_b >= 1.0 - 1e-12) {
        return Err(OttoError::validation(
            "q",
            format!("oscillator Q must be >= 1 (got {}, {})", pair.q_f, pair.q_b),
        ));
    }
    let (w1, w2) = (config.omega1, config.omega2);
    let (bh, bc) = (config.beta_h, config.beta_c);
    let at = |t: f64| {
        let (a, ab) = (alpha * t, alpha_bar * t);
        let x0 = cexp(-(I * a + bc) * w1);
        let y0 = cexp(I * (a - ab) * w2);
        let x1 = cexp(-(I * a - I * ab + bh) * w2);
        let y1 = cexp(I * a * w1);
        (ho_radicand(pair.q_f, x0, y0), ho_radicand(pair.q_b, x1, y1))
    };
    let f_forward = tracked_inv_sqrt(|t| at(t).0)?;
    let f_backward = tracked_inv_sqrt(|t| at(t).1)?;
    let norm = 2.0 * -(-bc * w1).exp_m1() * -(-bh * w2).exp_m1();
    Ok(norm * f_forward * f_backward)
}

/// `cos(z) / cosh(c)` for `c >= 0`, finite even when `cosh(c)` overflows.
fn cos_over_cosh(z: Complex64, c: f64) -> Complex64 {
    ((I * z - c).exp() + (-I * z - c).exp()) / (1.0 + (-2.0 * c).exp())
}

/// Characteristic function for the two-level system.
pub fn cf_tls(alpha: Complex64, alpha_bar: Complex64, pair: AdiabaticityPair, config: &EngineConfig) -> Result<Complex64> {
    let WorkingSubstance::TwoLevel { delta } = config.substance else {
        return Err(OttoError::validation("substance", "cf_tls needs the two-level system"));
    };
    for q in [pair.q_f, pair.q_b] {
        if !(0.0..=1.0).contains(&q) {
            return Err(OttoError::validation("q", format!("staying probability must lie in [0, 1] (got {q})")));
        }
    }
    let d1 = WorkingSubstance::tls_half_gap(delta, config.omega1);
    let d2 = WorkingSubstance::tls_half_gap(delta, config.omega2);
    let (bc, bh) = (config.beta_c * d1, config.beta_h * d2);
    let shift = (alpha - alpha_bar) * d2;
    // x± = cos[(α-ᾱ)Δ₂ ± (α - iβ_c)Δ₁], y± = cos[αΔ₁ ± (α - ᾱ - iβ_h)Δ₂]
    let x_plus = cos_over_cosh(shift + (alpha - I * config.beta_c) * d1, bc);
    let x_minus = cos_over_cosh(shift - (alpha - I * config.beta_c) * d1, bc);
    let y_plus = cos_over_cosh(alpha * d1 + (alpha - alpha_bar - I * config.beta_h) * d2, bh);
    let y_minus = cos_over_cosh(alpha * d1 - (alpha - alpha_bar - I * config.beta_h) * d2, bh);
    let forward = pair.q_f * x_minus - (pair.q_f - 1.0) * x_plus;
    let backward = pair.q_b * y_minus - (pair.q_b - 1.0) * y_plus;
    Ok(forward * backward)
}

/// Characteristic function for the configured substance.
pub fn cf(alpha: Complex64, alpha_bar: Complex64, pair: AdiabaticityPair, config: &EngineConfig) -> Result<Complex64> {
    match config.substance {
        WorkingSubstance::HarmonicOscillator => cf_ho(alpha, alpha_bar, pair, config),
        WorkingSubstance::TwoLevel { .. } => cf_tls(alpha, alpha_bar, pair, config),
    }
}

/// First and second joint moments of work and hot-bath heat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub w: f64,
    pub w2: f64,
    pub qh: f64,
    pub qh2: f64,
    pub w_qh: f64,
}

impl Moments {
    pub fn w_var(&self) -> f64 {
        self.w2 - self.w * self.w
    }

    pub fn qh_var(&self) -> f64 {
        self.qh2 - self.qh * self.qh
    }
}

// 4th-order central weights at offsets -2..=2
const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
const D2: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

/// Stencil derivative `∂ᵖ_α ∂ˢ_ᾱ G(0, 0)` with step `h`, for `p + s ≤ 2`.
fn stencil<F>(cf: &F, p: usize, s: usize, h: f64) -> Result<Complex64>
where
    F: Fn(f64, f64) -> Result<Complex64>,
{
    let weights = |order: usize| -> [f64; 5] {
        match order {
            0 => [0.0, 0.0, 1.0, 0.0, 0.0],
            1 => D1,
            _ => D2,
        }
    };
    let (wa, wb) = (weights(p), weights(s));
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, ca) in wa.iter().enumerate() {
        for (j, cb) in wb.iter().enumerate() {
            let c = ca * cb;
            if c != 0.0 {
                acc += c * cf((i as f64 - 2.0) * h, (j as f64 - 2.0) * h)?;
            }
        }
    }
    Ok(acc / h.powi((p + s) as i32))
}

/// `⟨wᵖ q_hˢ⟩` from a characteristic function of real `(α, ᾱ)`.
///
/// Uses the 4th-order central stencil at steps `h` and `h/2` combined by
/// Richardson extrapolation.
pub fn moment<F>(cf: F, p: usize, s: usize) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<Complex64>,
{
    if p + s > 2 {
        return Err(OttoError::validation("order", format!("p + s must be <= 2 (got {p} + {s})")));
    }
    if p + s == 0 {
        return Ok(cf(0.0, 0.0)?.re);
    }
    let coarse = stencil(&cf, p, s, FD_STEP)?;
    let fine = stencil(&cf, p, s, FD_STEP / 2.0)?;
    let derivative = (16.0 * fine - coarse) / 15.0;
    // ∂ⁿG = iⁿ ⟨...⟩
    let value = derivative / I.powi((p + s) as i32);
    if value.im.abs() > 1e-8 * value.re.abs().max(1.0) {
        return Err(OttoError::numerical(
            "moments",
            format!("moment ({p}, {s}) has imaginary residue {:.3e} against {:.6e}", value.im, value.re),
        ));
    }
    Ok(value.re)
}

/// Points on the circle of a contour moment.
pub const CONTOUR_POINTS: usize = 32;

/// First and second moments of `X = a w + b q_h` from the Taylor coefficients
/// of `z ↦ G(a z, b z)`, computed by the trapezoidal rule on `|z| = radius`.
///
/// The radius must stay well inside the disc where `G` is analytic; the
/// aliasing error then decays like `(radius / R)^CONTOUR_POINTS`.
pub fn contour_moments<F>(cf: F, a: f64, b: f64, radius: f64) -> Result<(f64, f64)>
where
    F: Fn(Complex64, Complex64) -> Result<Complex64>,
{
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(OttoError::validation("radius", format!("must be positive and finite (got {radius})")));
    }
    let n = CONTOUR_POINTS;
    let (mut c1, mut c2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for k in 0..n {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let z = Complex64::from_polar(radius, theta);
        let g = cf(a * z, b * z)?;
        c1 += g * Complex64::from_polar(1.0, -theta);
        c2 += g * Complex64::from_polar(1.0, -2.0 * theta);
    }
    let c1 = c1 / (n as f64 * radius);
    let c2 = c2 / (n as f64 * radius * radius);
    // G = Σ iⁿ⟨Xⁿ⟩ zⁿ / n!
    let first = c1 / I;
    let second = -2.0 * c2;
    for (name, v) in [("first", first), ("second", second)] {
        if v.im.abs() > 1e-8 * v.re.abs().max(1.0) {
            return Err(OttoError::numerical(
                "moments",
                format!("{name} contour moment has imaginary residue {:.3e} against {:.6e}", v.im, v.re),
            ));
        }
    }
    Ok((first.re, second.re))
}

/// All first and second moments for the configured substance with perfect
/// thermalization.
///
/// Finite differences along the real axis locate the scale of each moment;
/// contour integrals in the complex plane then give the moments without the
/// `ε/h²` roundoff floor of the difference quotients.
pub fn cf_moments(pair: AdiabaticityPair, config: &EngineConfig) -> Result<Moments> {
    let g = |a: f64, b: f64| cf(Complex64::new(a, 0.0), Complex64::new(b, 0.0), pair, config);
    let rough = Moments {
        w: moment(g, 1, 0)?,
        w2: moment(g, 2, 0)?,
        qh: moment(g, 0, 1)?,
        qh2: moment(g, 0, 2)?,
        w_qh: moment(g, 1, 1)?,
    };
    let gc = |a: Complex64, b: Complex64| cf(a, b, pair, config);
    // poles of the oscillator function sit at |Im α| of order β
    let beta_min = config.beta_h.min(config.beta_c);
    let radius = |second: f64| (0.1 / second.abs().max(1e-300).sqrt()).min(0.25 * beta_min);
    let (w, w2) = contour_moments(gc, 1.0, 0.0, radius(rough.w2))?;
    let (qh, qh2) = contour_moments(gc, 0.0, 1.0, radius(rough.qh2))?;
    let sum2 = rough.w2 + rough.qh2 + 2.0 * rough.w_qh;
    let (_, s2) = contour_moments(gc, 1.0, 1.0, radius(sum2))?;
    Ok(Moments {
        w,
        w2,
        qh,
        qh2,
        w_qh: 0.5 * (s2 - w2 - qh2),
    })
}
