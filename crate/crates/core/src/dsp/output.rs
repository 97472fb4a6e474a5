//! Analog output format: 2.5 V null, 5 mV per °/s, clamped to the range.

use serde::{Deserialize, Serialize};

pub const NULL_VOLTS: f64 = 2.5;
/// V per °/s.
pub const SENSITIVITY: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeCode {
    #[default]
    Dps75,
    Dps150,
    Dps300,
}

impl RangeCode {
    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Self::Dps75),
            1 => Some(Self::Dps150),
            2 => Some(Self::Dps300),
            _ => None,
        }
    }

    pub fn code(self) -> u32 {
        self as u32
    }

    /// Full-scale rate, °/s.
    pub fn full_scale(self) -> f64 {
        match self {
            Self::Dps75 => 75.0,
            Self::Dps150 => 150.0,
            Self::Dps300 => 300.0,
        }
    }
}

/// Returns the output voltage and whether it was clamped.
#[inline]
pub fn output_format(rate_dps: f64, range: RangeCode) -> (f64, bool) {
    let fs = range.full_scale();
    let clamped = rate_dps.clamp(-fs, fs);
    (NULL_VOLTS + SENSITIVITY * clamped, clamped != rate_dps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_points() {
        assert_eq!(output_format(0.0, RangeCode::Dps75), (2.5, false));
        let (v, c) = output_format(100.0, RangeCode::Dps300);
        assert!((v - 3.0).abs() < 1e-15 && !c);
        let (v, c) = output_format(-400.0, RangeCode::Dps300);
        assert!((v - 1.0).abs() < 1e-15 && c);
        assert!(output_format(80.0, RangeCode::Dps75).1);
    }

    #[test]
    fn codes_roundtrip() {
        for r in [RangeCode::Dps75, RangeCode::Dps150, RangeCode::Dps300] {
            assert_eq!(RangeCode::from_code(r.code()), Some(r));
        }
        assert_eq!(RangeCode::from_code(3), None);
    }
}
