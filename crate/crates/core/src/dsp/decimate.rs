//! Decimation from the fast rate to the 1 kHz output rate.
//!
//! Boxcar ↓25 (250 kHz → 10 kHz), half-band FIR ↓2 (→ 5 kHz), FIR ↓5
//! (→ 1 kHz), then a second-order Butterworth channel filter at the output
//! rate that sets the rate bandwidth. The boxcar lives with the
//! demodulator; everything after it is a [`DecimatorTail`].

use alloc::vec::Vec;
use libm::log10;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::filters::{fold, halfband_kaiser, lowpass_kaiser, Biquad, Boxcar, FirDecimator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("decimation factors multiply to {product}, expected {expected}")]
    Factors { product: usize, expected: usize },
    #[error("invalid filter length {0}")]
    Length(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecimationPlan {
    pub fs_fast: f64,
    pub fs_out: f64,
    pub boxcar: usize,
    pub halfband_taps: usize,
    pub halfband_beta: f64,
    pub fir_factor: usize,
    pub fir_taps: usize,
    pub fir_cutoff_hz: f64,
    pub fir_beta: f64,
}

impl Default for DecimationPlan {
    fn default() -> Self {
        Self {
            fs_fast: 250_000.0,
            fs_out: 1000.0,
            boxcar: 25,
            halfband_taps: 19,
            halfband_beta: 7.0,
            fir_factor: 5,
            fir_taps: 41,
            fir_cutoff_hz: 400.0,
            fir_beta: 7.86,
        }
    }
}

impl DecimationPlan {
    pub fn validate(&self) -> Result<(), PlanError> {
        let product = self.boxcar * 2 * self.fir_factor;
        let expected = libm::round(self.fs_fast / self.fs_out) as usize;
        if product != expected {
            return Err(PlanError::Factors { product, expected });
        }
        if self.halfband_taps % 4 != 3 {
            return Err(PlanError::Length(self.halfband_taps));
        }
        if self.fir_taps % 2 != 1 {
            return Err(PlanError::Length(self.fir_taps));
        }
        Ok(())
    }

    /// Rate after the boxcar.
    pub fn fs_mid(&self) -> f64 {
        self.fs_fast / self.boxcar as f64
    }

    pub fn halfband(&self) -> Vec<f64> {
        halfband_kaiser(self.halfband_taps, self.halfband_beta)
    }

    pub fn fir(&self) -> Vec<f64> {
        lowpass_kaiser(
            self.fir_taps,
            self.fir_cutoff_hz,
            self.fs_mid() / 2.0,
            self.fir_beta,
        )
    }
}

/// Half-band, FIR and channel filter, from the mid rate to the output rate.
#[derive(Debug, Clone)]
pub struct DecimatorTail {
    halfband: FirDecimator,
    fir: FirDecimator,
    channel: Biquad,
    fs_mid: f64,
    fs_out: f64,
    last: f64,
}

impl DecimatorTail {
    pub fn new(plan: &DecimationPlan, channel_corner_hz: f64) -> Self {
        Self {
            halfband: FirDecimator::new(plan.halfband(), 2),
            fir: FirDecimator::new(plan.fir(), plan.fir_factor),
            channel: Biquad::butterworth_lowpass(channel_corner_hz, plan.fs_out),
            fs_mid: plan.fs_mid(),
            fs_out: plan.fs_out,
            last: 0.0,
        }
    }

    /// Replaces the channel filter, keeping its state.
    pub fn set_channel_corner(&mut self, corner_hz: f64) {
        let fresh = Biquad::butterworth_lowpass(corner_hz, self.fs_out);
        self.channel.b = fresh.b;
        self.channel.a = fresh.a;
    }

    #[inline]
    pub fn push(&mut self, x: f64) -> Option<f64> {
        let y = self.halfband.push(x)?;
        let y = self.fir.push(y)?;
        self.last = self.channel.process(y);
        Some(self.last)
    }

    pub fn output(&self) -> f64 {
        self.last
    }

    /// Magnitude seen by a tone at `f` (at the mid rate) on its way to the
    /// output, following each fold.
    pub fn response(&self, f: f64) -> f64 {
        let f1 = f;
        let g1 = self.halfband.response(f1, self.fs_mid);
        let f2 = fold(f1, self.fs_mid / 2.0);
        let fs2 = self.fs_mid / 2.0;
        let g2 = self.fir.response(f2, fs2);
        let f3 = fold(f2, self.fs_out);
        g1 * g2 * self.channel.response(f3, self.fs_out)
    }

    pub fn channel(&self) -> &Biquad {
        &self.channel
    }

    pub fn halfband(&self) -> &FirDecimator {
        &self.halfband
    }

    pub fn fir(&self) -> &FirDecimator {
        &self.fir
    }
}

/// Full decimator from the fast rate: boxcar then tail.
#[derive(Debug, Clone)]
pub struct Decimator {
    boxcar: Boxcar,
    tail: DecimatorTail,
    fs_fast: f64,
}

impl Decimator {
    pub fn new(plan: &DecimationPlan, channel_corner_hz: f64) -> Result<Self, PlanError> {
        plan.validate()?;
        Ok(Self {
            boxcar: Boxcar::new(plan.boxcar),
            tail: DecimatorTail::new(plan, channel_corner_hz),
            fs_fast: plan.fs_fast,
        })
    }

    #[inline]
    pub fn push(&mut self, x: f64) -> Option<f64> {
        let y = self.boxcar.push(x)?;
        self.tail.push(y)
    }

    /// Magnitude seen by a fast-rate tone at `f` at the output.
    pub fn response(&self, f: f64) -> f64 {
        let g0 = self.boxcar.response(f, self.fs_fast);
        let mid = self.fs_fast / self.boxcar.factor() as f64;
        g0 * self.tail.response(fold(f, mid))
    }

    pub fn response_db(&self, f: f64) -> f64 {
        20.0 * log10(self.response(f).max(1e-300))
    }

    pub fn tail(&self) -> &DecimatorTail {
        &self.tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_is_valid() {
        let plan = DecimationPlan::default();
        plan.validate().unwrap();
        assert_eq!(plan.fs_mid(), 10_000.0);
    }

    #[test]
    fn constant_passes_unchanged() {
        let mut d = Decimator::new(&DecimationPlan::default(), 50.0).unwrap();
        let mut last = 0.0;
        for _ in 0..250 * 2000 {
            if let Some(y) = d.push(0.7) {
                last = y;
            }
        }
        assert!((last - 0.7).abs() < 1e-9, "{last}");
    }

    #[test]
    fn carrier_ripple_is_rejected() {
        let d = Decimator::new(&DecimationPlan::default(), 50.0).unwrap();
        for f in [14_000.0, 15_000.0, 15_500.0, 30_000.0] {
            assert!(d.response_db(f) <= -80.0, "{f}: {}", d.response_db(f));
        }
        assert!(d.response_db(1.0).abs() < 0.01);
    }

    #[test]
    fn bad_plan() {
        let plan = DecimationPlan {
            boxcar: 20,
            ..DecimationPlan::default()
        };
        assert!(plan.validate().is_err());
    }
}
