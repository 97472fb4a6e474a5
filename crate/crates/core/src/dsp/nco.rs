//! Numerically controlled oscillator: 32-bit phase accumulator and a
//! 1024-entry quarter-wave sine table with linear interpolation.

use alloc::boxed::Box;
use libm::{round, sin};
use once_cell::race::OnceBox;

const TABLE_BITS: u32 = 10;
const TABLE_LEN: usize = 1 << TABLE_BITS;
/// Fraction bits below the table index within one quadrant.
const FRAC_BITS: u32 = 30 - TABLE_BITS;
const QUARTER: u32 = 1 << 30;

/// `sin(π/2 · k/1024)` for `k = 0..=1024`.
struct QuarterWave([f64; TABLE_LEN + 1]);

impl QuarterWave {
    fn build() -> Self {
        let mut t = [0.0; TABLE_LEN + 1];
        for (k, v) in t.iter_mut().enumerate() {
            *v = sin(core::f64::consts::FRAC_PI_2 * k as f64 / TABLE_LEN as f64);
        }
        Self(t)
    }

    /// Sine of a phase within the first quadrant, `p ∈ [0, 2^30]`.
    #[inline]
    fn quadrant(&self, p: u32) -> f64 {
        let idx = (p >> FRAC_BITS) as usize;
        if idx >= TABLE_LEN {
            return self.0[TABLE_LEN];
        }
        let frac = (p & ((1 << FRAC_BITS) - 1)) as f64 / (1u32 << FRAC_BITS) as f64;
        let a = self.0[idx];
        a + (self.0[idx + 1] - a) * frac
    }

    #[inline]
    fn sin(&self, phase: u32) -> f64 {
        let p = phase & (QUARTER - 1);
        match phase >> 30 {
            0 => self.quadrant(p),
            1 => self.quadrant(QUARTER - p),
            2 => -self.quadrant(p),
            _ => -self.quadrant(QUARTER - p),
        }
    }
}

/// Table shared by every oscillator; built on first use.
fn table() -> &'static QuarterWave {
    static TABLE: OnceBox<QuarterWave> = OnceBox::new();
    TABLE.get_or_init(|| Box::new(QuarterWave::build()))
}

/// `sin` of a 32-bit phase (one turn = 2^32).
#[inline]
pub fn sin_lut(phase: u32) -> f64 {
    table().sin(phase)
}

/// `cos` of a 32-bit phase.
#[inline]
pub fn cos_lut(phase: u32) -> f64 {
    table().sin(phase.wrapping_add(QUARTER))
}

/// Frequency word for `freq` at sample rate `fs`: `round(freq/fs · 2^32)`.
pub fn frequency_word(freq: f64, fs: f64) -> u32 {
    let w = round(freq / fs * 4_294_967_296.0);
    (w as i64).rem_euclid(1 << 32) as u32
}

/// Output frequency of word `fw` at `fs`.
pub fn word_frequency(fw: u32, fs: f64) -> f64 {
    fw as f64 / 4_294_967_296.0 * fs
}

/// Converts a phase in radians to a 32-bit phase.
pub fn radians_to_phase(rad: f64) -> u32 {
    let turns = rad / core::f64::consts::TAU;
    let frac = turns - libm::floor(turns);
    (round(frac * 4_294_967_296.0) as u64 & 0xFFFF_FFFF) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NcoState {
    pub phase: u32,
    pub fw: u32,
}

impl NcoState {
    pub fn new(fw: u32) -> Self {
        Self { phase: 0, fw }
    }

    /// Outputs `(sin, cos)` of the current phase, then advances by `fw`.
    #[inline]
    pub fn step(&mut self) -> (f64, f64) {
        let out = (sin_lut(self.phase), cos_lut(self.phase));
        self.phase = self.phase.wrapping_add(self.fw);
        out
    }

    /// `(sin, cos)` of the current phase shifted by `offset`, without advancing.
    #[inline]
    pub fn sin_cos_offset(&self, offset: u32) -> (f64, f64) {
        let p = self.phase.wrapping_add(offset);
        (sin_lut(p), cos_lut(p))
    }

    pub fn frequency(&self, fs: f64) -> f64 {
        word_frequency(self.fw, fs)
    }
}
