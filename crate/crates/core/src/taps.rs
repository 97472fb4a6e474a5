//! Named observation points of the model and the chain.

use serde::{Deserialize, Serialize};

use crate::afe::AdcConfig;
use crate::dsp::output::NULL_VOLTS;

/// Rate domain a tap is produced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapRate {
    /// 1 MHz
    Physics,
    /// 250 kHz
    Fast,
    /// 10 kHz
    Mid,
    /// 1 kHz
    Out,
}

impl TapRate {
    pub fn hz(self) -> f64 {
        match self {
            TapRate::Physics => 1_000_000.0,
            TapRate::Fast => 250_000.0,
            TapRate::Mid => 10_000.0,
            TapRate::Out => 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapId {
    X1,
    X2,
    PrimaryPickoffAdc,
    PdError,
    NcoFw,
    AgcGain,
    DemodI,
    DemodQ,
    RateFiltered,
    RateCompensated,
    OutputVolts,
}

impl TapId {
    pub const ALL: [TapId; 11] = [
        TapId::X1,
        TapId::X2,
        TapId::PrimaryPickoffAdc,
        TapId::PdError,
        TapId::NcoFw,
        TapId::AgcGain,
        TapId::DemodI,
        TapId::DemodQ,
        TapId::RateFiltered,
        TapId::RateCompensated,
        TapId::OutputVolts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TapId::X1 => "x1",
            TapId::X2 => "x2",
            TapId::PrimaryPickoffAdc => "primary_pickoff_adc",
            TapId::PdError => "pd_error",
            TapId::NcoFw => "nco_fw",
            TapId::AgcGain => "agc_gain",
            TapId::DemodI => "demod_i",
            TapId::DemodQ => "demod_q",
            TapId::RateFiltered => "rate_filtered",
            TapId::RateCompensated => "rate_compensated",
            TapId::OutputVolts => "output_volts",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.name() == name)
    }

    pub fn rate(self) -> TapRate {
        match self {
            TapId::X1 | TapId::X2 => TapRate::Physics,
            TapId::PrimaryPickoffAdc | TapId::PdError | TapId::NcoFw | TapId::AgcGain => {
                TapRate::Fast
            }
            TapId::DemodI | TapId::DemodQ => TapRate::Mid,
            TapId::RateFiltered | TapId::RateCompensated | TapId::OutputVolts => TapRate::Out,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            TapId::X1 | TapId::X2 => "m",
            TapId::PdError => "rad",
            TapId::NcoFw => "Hz",
            TapId::RateCompensated => "deg/s",
            _ => "V",
        }
    }

    /// `(scale, offset)` of the 16-bit trace encoding:
    /// `value = offset + code·scale`.
    pub fn encoding(self, adc: &AdcConfig, nominal_hz: f64) -> (f64, f64) {
        const FULL: f64 = 32768.0;
        match self {
            TapId::X1 => (5e-6 / FULL, 0.0),
            TapId::X2 => (1e-7 / FULL, 0.0),
            TapId::PrimaryPickoffAdc => (adc.lsb(), adc.vref / 2.0),
            TapId::PdError => (core::f64::consts::PI / FULL, 0.0),
            TapId::NcoFw => (1000.0 / FULL, nominal_hz),
            TapId::AgcGain => (2.5 / FULL, 0.0),
            TapId::DemodI | TapId::DemodQ | TapId::RateFiltered => (5.0 / FULL, 0.0),
            TapId::RateCompensated => (400.0 / FULL, 0.0),
            TapId::OutputVolts => (2.5 / FULL, NULL_VOLTS),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for t in TapId::ALL {
            assert_eq!(TapId::from_name(t.name()), Some(t));
        }
        assert_eq!(TapId::from_name("nope"), None);
    }
}
