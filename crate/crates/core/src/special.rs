//! Double-double accumulation and terminating Gauss hypergeometric series.

use std::ops::{Add, AddAssign, Neg};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`, about 32 significant digits.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };
    pub const ONE: DoubleDouble = DoubleDouble { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        DoubleDouble { hi, lo }
    }

    pub fn div_f64(self, b: f64) -> Self {
        let q1 = self.hi / b;
        // remainder self - q1 * b, exact to double-double
        let (p, e) = two_prod(q1, b);
        let (s, t) = two_sum(self.hi, -p);
        let r = s + (t - e + self.lo);
        let q2 = r / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        DoubleDouble { hi, lo }
    }
}

impl Add for DoubleDouble {
    type Output = DoubleDouble;
    fn add(self, rhs: DoubleDouble) -> DoubleDouble {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }
}

impl AddAssign for DoubleDouble {
    fn add_assign(&mut self, rhs: DoubleDouble) {
        *self = *self + rhs;
    }
}

impl Neg for DoubleDouble {
    type Output = DoubleDouble;
    fn neg(self) -> DoubleDouble {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

/// `ρ^p · ₂F₁(a, b; c; z)` for a polynomial series, `a = -K` with `K` a
/// non-negative integer.
///
/// The scale factor `ρ^p` (with `ρ >= 0`) is folded in before exponentiation so
/// that huge series values paired with tiny prefactors stay representable. The
/// sum is accumulated in double-double so alternating terms cancel cleanly.
/// For `|z| > 1` the series is summed from its last (dominant) term backwards.
pub fn scaled_terminating_2f1(a: f64, b: f64, c: f64, z: f64, rho: f64, p: f64) -> f64 {
    debug_assert!(a <= 0.0 && a.fract() == 0.0, "series must terminate: a = {a}");
    debug_assert!(rho >= 0.0);
    let mut degree = (-a) as usize;
    if b <= 0.0 && b.fract() == 0.0 {
        degree = degree.min((-b) as usize);
    }
    let ratio = |k: usize| -> (f64, f64) {
        let k = k as f64;
        // t_{k+1} / t_k = num / den · z
        ((a + k) * (b + k), (c + k) * (k + 1.0))
    };
    if degree == 0 || z == 0.0 {
        return if p == 0.0 { 1.0 } else { rho.powf(p) };
    }

    if z.abs() <= 1.0 {
        let mut term = DoubleDouble::ONE;
        let mut sum = DoubleDouble::ONE;
        for k in 0..degree {
            let (num, den) = ratio(k);
            term = term.mul_f64(num).mul_f64(z).div_f64(den);
            sum += term;
        }
        let scale = if p == 0.0 { 1.0 } else { rho.powf(p) };
        return scale * sum.to_f64();
    }

    // log |t_K| and its sign
    let mut log_mag = 0.0;
    let mut negative = false;
    for k in 0..degree {
        let (num, den) = ratio(k);
        let r = num * z / den;
        log_mag += r.abs().ln();
        negative ^= r < 0.0;
    }
    let mut term = DoubleDouble::ONE;
    let mut sum = DoubleDouble::ONE;
    for k in (0..degree).rev() {
        let (num, den) = ratio(k);
        term = term.mul_f64(den).div_f64(num).div_f64(z);
        sum += term;
    }
    let log_scale = if p == 0.0 { 0.0 } else { p * rho.ln() };
    let magnitude = (log_mag + log_scale).exp();
    let value = magnitude * sum.to_f64();
    if negative {
        -value
    } else {
        value
    }
}

/// Natural logarithms of `0!, 1!, ..., max!`.
pub fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=max {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_2f1(a: f64, b: f64, c: f64, z: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 0..200 {
            let k = k as f64;
            term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
            if term == 0.0 {
                break;
            }
            sum += term;
        }
        sum
    }

    #[test]
    fn double_double_recovers_cancelled_bits() {
        let big = DoubleDouble::from_f64(1e17);
        let sum = big + DoubleDouble::from_f64(1.0) + DoubleDouble::from_f64(-1e17);
        assert_eq!(sum.to_f64(), 1.0);
        let third = DoubleDouble::ONE.div_f64(3.0).mul_f64(3.0);
        assert_eq!(third.to_f64(), 1.0);
    }

    #[test]
    fn small_polynomials() {
        // ₂F₁(-1, b; c; z) = 1 - b z / c
        let v = scaled_terminating_2f1(-1.0, 0.7, 1.5, 0.3, 1.0, 0.0);
        assert!((v - (1.0 - 0.7 * 0.3 / 1.5)).abs() < 1e-15);
        // ₂F₁(-2, -2; 1/2; z) = 1 + 8z + 8z²/3
        for z in [-0.4, 0.2, -3.0, -250.0] {
            let v = scaled_terminating_2f1(-2.0, -2.0, 0.5, z, 1.0, 0.0);
            let n = naive_2f1(-2.0, -2.0, 0.5, z);
            assert!((v - n).abs() <= 1e-13 * n.abs().max(1.0), "{z}: {v} {n}");
        }
    }

    #[test]
    fn scaling_avoids_overflow() {
        // ρ^{p} F with F ~ z^K huge and ρ tiny: compare in logs
        let (a, b, c, z) = (-30.0, -30.0, 0.5, -2e9);
        let rho: f64 = 1e-9 / 2.0;
        let v = scaled_terminating_2f1(a, b, c, z, rho, 30.0);
        assert!(v.is_finite() && v != 0.0);
        // last term dominates: (a)_K (b)_K / ((c)_K K!) z^K ρ^30
        let mut log_t = 0.0;
        for k in 0..30 {
            let k = k as f64;
            log_t += (((a + k) * (b + k)) / ((c + k) * (k + 1.0)) * z).abs().ln();
        }
        let expected = (log_t + 30.0 * rho.ln()).exp();
        assert!((v.abs() / expected - 1.0).abs() < 1e-6, "{v} {expected}");
    }

    #[test]
    fn ln_factorial_table() {
        let t = ln_factorials(10);
        assert!((t[10] - 3628800f64.ln()).abs() < 1e-12);
    }
}
