//! Adaptive Dormand–Prince 5(4) integrator for small fixed-size systems.

use crate::error::{OttoError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            max_steps: 2_000_000,
        }
    }
}

/// Step statistics of one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        let s = h * c;
        for i in 0..N {
            out[i] += s * k[i];
        }
    }
    out
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` and returns the final state.
pub fn integrate<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    opts: &OdeOptions,
) -> Result<([f64; N], OdeStats)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut stats = OdeStats::default();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok((y0, stats));
    }
    if !(span > 0.0) || !span.is_finite() {
        return Err(OttoError::numerical(
            "ode",
            format!("invalid integration interval [{t0}, {t1}]"),
        ));
    }

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);

    // initial step from the derivative scale
    let scale = |y: &[f64; N], i: usize| opts.atol + opts.rtol * y[i].abs();
    let d0 = (0..N).map(|i| (y[i] / scale(&y, i)).powi(2)).sum::<f64>().sqrt();
    let d1 = (0..N).map(|i| (k1[i] / scale(&y, i)).powi(2)).sum::<f64>().sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(span);

    let h_min = span * 1e-14;
    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(OttoError::numerical(
                "ode",
                format!(
                    "step budget of {} exhausted at t = {t:.6} of {t1:.6} (h = {h:.3e})",
                    opts.max_steps
                ),
            ));
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }

        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y_new);

        let mut err = 0.0;
        for i in 0..N {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / N as f64).sqrt();

        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + h };
            y = y_new;
            k1 = k7;
            if last {
                return Ok((y, stats));
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            if h < h_min {
                return Err(OttoError::numerical(
                    "ode",
                    format!("step size underflow at t = {t:.6} (h = {h:.3e}, error ratio {err:.3e})"),
                ));
            }
        }
    }
}
