//! Behavioral analog front end.
//!
//! Ideal SAR converters (no aperture, INL or DNL), binary-weighted PGAs, a
//! first-order anti-alias filter and seeded Gaussian noise sources. Every
//! setting is taken from the register file by the simulation kernel; the
//! sticky clip flags are published back as a read-only register.

use libm::{exp, round, sqrt};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AfeError {
    #[error("resolution {0} outside 8..=16 bits")]
    Bits(u32),
    #[error("code {code} does not fit {bits} bits")]
    CodeRange { code: u32, bits: u32 },
    #[error("gain code {0} outside 0..=7")]
    GainCode(u8),
    #[error("reference must be positive")]
    Vref,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub bits: u32,
    pub vref: f64,
    pub fs: f64,
}

impl Default for AdcConfig {
    fn default() -> Self {
        Self {
            bits: 12,
            vref: 5.0,
            fs: 250_000.0,
        }
    }
}

impl AdcConfig {
    pub fn validate(&self) -> Result<(), AfeError> {
        if !(8..=16).contains(&self.bits) {
            return Err(AfeError::Bits(self.bits));
        }
        if !(self.vref > 0.0 && self.vref.is_finite()) {
            return Err(AfeError::Vref);
        }
        Ok(())
    }

    pub fn full_scale_codes(&self) -> u32 {
        1 << self.bits
    }

    pub fn lsb(&self) -> f64 {
        self.vref / self.full_scale_codes() as f64
    }

    pub fn midscale(&self) -> u32 {
        1 << (self.bits - 1)
    }

    /// Code relative to midscale, in volts.
    #[inline]
    pub fn centered_volts(&self, code: u32) -> f64 {
        (code as f64 - self.midscale() as f64) * self.lsb()
    }
}

pub type DacConfig = AdcConfig;

/// Programmable gain, exactly `2^gain_code`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PgaConfig {
    pub gain_code: u8,
}

impl PgaConfig {
    pub fn new(gain_code: u8) -> Result<Self, AfeError> {
        if gain_code > 7 {
            return Err(AfeError::GainCode(gain_code));
        }
        Ok(Self { gain_code })
    }

    pub fn gain(&self) -> f64 {
        (1u32 << self.gain_code) as f64
    }
}

/// Sticky saturation flags, as published in the `clip_flags` register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClipFlags(pub u32);

impl ClipFlags {
    pub const ADC_PRIMARY: u32 = 1 << 0;
    pub const ADC_SECONDARY: u32 = 1 << 1;
    pub const PGA_PRIMARY: u32 = 1 << 2;
    pub const PGA_SECONDARY: u32 = 1 << 3;
    pub const DAC_DRIVE: u32 = 1 << 4;
    pub const DAC_CONTROL: u32 = 1 << 5;

    pub fn set(&mut self, bit: u32) {
        self.0 |= bit;
    }

    pub fn any(&self) -> bool {
        self.0 != 0
    }
}

/// Quantizes `v` to an unsigned code; returns the code and whether it clipped.
#[inline]
pub fn adc_convert(v: f64, cfg: &AdcConfig) -> (u32, bool) {
    let max = (cfg.full_scale_codes() - 1) as f64;
    let code = round(v / cfg.vref * cfg.full_scale_codes() as f64);
    if code > max {
        (max as u32, true)
    } else if code < 0.0 || code.is_nan() {
        (0, true)
    } else {
        (code as u32, false)
    }
}

#[inline]
pub fn dac_convert(code: u32, cfg: &DacConfig) -> Result<f64, AfeError> {
    if code >= cfg.full_scale_codes() {
        return Err(AfeError::CodeRange {
            code,
            bits: cfg.bits,
        });
    }
    Ok(cfg.vref * code as f64 / cfg.full_scale_codes() as f64)
}

/// Nearest DAC code for a target voltage, clamped to the code range.
/// Returns the code and whether the clamp engaged.
#[inline]
pub fn dac_code_for(v: f64, cfg: &DacConfig) -> (u32, bool) {
    adc_convert(v, cfg)
}

/// Applies the PGA gain; saturates at ±vref.
#[inline]
pub fn pga_apply(v: f64, cfg: &PgaConfig, vref: f64) -> (f64, bool) {
    let out = v * cfg.gain();
    if out > vref {
        (vref, true)
    } else if out < -vref {
        (-vref, true)
    } else {
        (out, false)
    }
}

/// Seeded white Gaussian source with a given one-sided density.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    /// `density` in units/√Hz at sample rate `fs`; per-sample σ is
    /// `density·√(fs/2)`. `stream` separates independent sources sharing a
    /// seed.
    pub fn new(density: f64, fs: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            sigma: density * sqrt(fs / 2.0),
            rng,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub fn sample(&mut self) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.sigma * z
    }
}

/// Continuous first-order low-pass, discretized exactly for a fixed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntiAlias {
    alpha: f64,
    y: f64,
}

impl AntiAlias {
    pub fn new(corner_hz: f64, dt: f64) -> Self {
        Self {
            alpha: 1.0 - exp(-core::f64::consts::TAU * corner_hz * dt),
            y: 0.0,
        }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        self.y += self.alpha * (x - self.y);
        self.y
    }

    pub fn output(&self) -> f64 {
        self.y
    }

    pub fn reset(&mut self) {
        self.y = 0.0;
    }
}

/// Magnitude of a first-order low-pass at `freq`.
pub fn first_order_gain(corner_hz: f64, freq: f64) -> f64 {
    let r = freq / corner_hz;
    1.0 / sqrt(1.0 + r * r)
}
