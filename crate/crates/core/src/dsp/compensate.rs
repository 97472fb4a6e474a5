//! Temperature and offset compensation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Temperature range over which the gain polynomial must stay positive, °C.
pub const COMPENSATION_RANGE: (f64, f64) = (-40.0, 125.0);

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("compensation gain {gain} is not positive at {temp} °C")]
pub struct NonPositiveGain {
    pub temp: f64,
    pub gain: f64,
}

/// `rate = (raw − offset(T))·gain(T)` with quadratic polynomials in the die
/// temperature `T` (°C). The offset is in raw (pre-gain) units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompensationPoly {
    pub o0: f64,
    pub o1: f64,
    pub o2: f64,
    pub g0: f64,
    pub g1: f64,
    pub g2: f64,
}

impl Default for CompensationPoly {
    fn default() -> Self {
        Self::identity()
    }
}

impl CompensationPoly {
    pub const fn identity() -> Self {
        Self {
            o0: 0.0,
            o1: 0.0,
            o2: 0.0,
            g0: 1.0,
            g1: 0.0,
            g2: 0.0,
        }
    }

    /// Closed-loop trim solved by the calibration scenario (three
    /// temperatures, two-point per temperature) on the default model.
    pub const CALIBRATED_CLOSED_LOOP: Self = Self {
        o0: -1.357466317131184e-5,
        o1: -1.7661552931258484e-7,
        o2: 2.971847656851878e-9,
        g0: 1514.9815673828125,
        g1: -0.12087702006101608,
        g2: 0.00012100039020879194,
    };

    /// Open-loop trim, solved the same way.
    pub const CALIBRATED_OPEN_LOOP: Self = Self {
        o0: 6.331299664452672e-5,
        o1: -4.085671662323875e-6,
        o2: 2.1212557044236746e-8,
        g0: 43.41282653808594,
        g1: -0.0009730569436214864,
        g2: -1.1875889640577952e-6,
    };

    pub fn offset(&self, t: f64) -> f64 {
        self.o0 + t * (self.o1 + t * self.o2)
    }

    pub fn gain(&self, t: f64) -> f64 {
        self.g0 + t * (self.g1 + t * self.g2)
    }

    #[inline]
    pub fn apply(&self, raw: f64, t: f64) -> f64 {
        (raw - self.offset(t)) * self.gain(t)
    }

    /// Smallest gain over the compensation range and where it occurs.
    pub fn min_gain(&self) -> (f64, f64) {
        let (lo, hi) = COMPENSATION_RANGE;
        let mut best = (lo, self.gain(lo));
        let mut consider = |t: f64| {
            let g = self.gain(t);
            if !(g >= best.1) {
                best = (t, g);
            }
        };
        consider(hi);
        if self.g2 != 0.0 {
            let vertex = -self.g1 / (2.0 * self.g2);
            if vertex > lo && vertex < hi {
                consider(vertex);
            }
        }
        best
    }

    pub fn validate(&self) -> Result<(), NonPositiveGain> {
        let (temp, gain) = self.min_gain();
        if gain > 0.0 && gain.is_finite() {
            Ok(())
        } else {
            Err(NonPositiveGain { temp, gain })
        }
    }

    /// The same polynomial with the temperature terms dropped, evaluated at
    /// `t`: what a part without temperature compensation would apply.
    pub fn frozen_at(&self, t: f64) -> Self {
        Self {
            o0: self.offset(t),
            o1: 0.0,
            o2: 0.0,
            g0: self.gain(t),
            g1: 0.0,
            g2: 0.0,
        }
    }
}
