//! Frequency schedules for the work strokes.

use crate::error::{OttoError, Result};

/// Shape of the interpolation between the endpoint frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolFamily {
    /// `ω²(t)` linear in `t`.
    LinearSquared,
    /// `ω(t)` linear in `t`.
    LinearFrequency,
}

/// A frequency sweep `ω(t)` on `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkProtocol {
    omega_start: f64,
    omega_end: f64,
    duration: f64,
    family: ProtocolFamily,
}

/// The default work protocol: `ω²(t) = ω_s² + (ω_e² − ω_s²) t / duration`.
pub fn make_linear_protocol(omega_start: f64, omega_end: f64, duration: f64) -> Result<WorkProtocol> {
    WorkProtocol::new(omega_start, omega_end, duration, ProtocolFamily::LinearSquared)
}

impl WorkProtocol {
    pub fn new(
        omega_start: f64,
        omega_end: f64,
        duration: f64,
        family: ProtocolFamily,
    ) -> Result<Self> {
        for (key, value) in [("omega_start", omega_start), ("omega_end", omega_end), ("duration", duration)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(OttoError::validation(
                    key,
                    format!("must be positive and finite (got {value})"),
                ));
            }
        }
        Ok(WorkProtocol {
            omega_start,
            omega_end,
            duration,
            family,
        })
    }

    pub fn omega_start(&self) -> f64 {
        self.omega_start
    }

    pub fn omega_end(&self) -> f64 {
        self.omega_end
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn family(&self) -> ProtocolFamily {
        self.family
    }

    /// `ω²(t)`, clamped to the stroke interval.
    pub fn omega_sq(&self, t: f64) -> f64 {
        let s = (t / self.duration).clamp(0.0, 1.0);
        match self.family {
            ProtocolFamily::LinearSquared => {
                let (a, b) = (self.omega_start * self.omega_start, self.omega_end * self.omega_end);
                // endpoint-exact form of a + (b - a) s
                a * (1.0 - s) + b * s
            }
            ProtocolFamily::LinearFrequency => {
                let w = self.omega_start * (1.0 - s) + self.omega_end * s;
                w * w
            }
        }
    }

    pub fn omega(&self, t: f64) -> f64 {
        self.omega_sq(t).sqrt()
    }

    /// The same sweep run backwards in time.
    pub fn reversed(&self) -> Self {
        WorkProtocol {
            omega_start: self.omega_end,
            omega_end: self.omega_start,
            ..*self
        }
    }
}
