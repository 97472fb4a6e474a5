//! Primary amplitude control.
//!
//! The amplitude estimate is `2·LPF(x·sin)`, referred back to the pickoff
//! by dividing out the PGA and anti-alias gains, so the setpoint is a
//! pickoff amplitude in volts. The loop output is the drive carrier
//! amplitude in volts.

use serde::{Deserialize, Serialize};

use super::filters::OnePole;
use super::pi::PiController;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgcConfig {
    /// Pickoff amplitude to regulate to, V.
    pub setpoint: f64,
    pub kp: f64,
    /// Per sample.
    pub ki: f64,
    /// Drive amplitude applied before the loop is enabled, V.
    pub init: f64,
    /// Amplitude-estimate low-pass corner, Hz.
    pub lpf_corner_hz: f64,
}

impl Default for AgcConfig {
    fn default() -> Self {
        Self {
            setpoint: 1.0,
            kp: 8.9,
            ki: 1.68e-3,
            init: 1.0,
            lpf_corner_hz: 100.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Agc {
    cfg: AgcConfig,
    fs: f64,
    lpf: OnePole,
    pi: PiController,
    ref_gain: f64,
    amplitude: f64,
    enabled: bool,
    frozen: bool,
}

impl Agc {
    /// `ref_gain` converts pickoff volts to ADC volts at the drive
    /// frequency; `max_drive` is the largest carrier amplitude the DAC can
    /// produce.
    pub fn new(cfg: &AgcConfig, fs: f64, ref_gain: f64, max_drive: f64) -> Self {
        Self {
            cfg: *cfg,
            fs,
            lpf: OnePole::new(cfg.lpf_corner_hz, fs),
            pi: PiController::new(cfg.kp, cfg.ki, -max_drive, max_drive),
            ref_gain,
            amplitude: 0.0,
            enabled: false,
            frozen: false,
        }
    }

    pub fn configure(&mut self, cfg: &AgcConfig, ref_gain: f64, max_drive: f64) {
        self.cfg = *cfg;
        self.lpf.set_corner(cfg.lpf_corner_hz, self.fs);
        self.pi.set_gains(cfg.kp, cfg.ki);
        self.pi.set_limits(-max_drive, max_drive);
        self.ref_gain = ref_gain;
    }

    /// Enabling presets the integrator to the open-loop drive level.
    pub fn set_enabled(&mut self, on: bool) {
        if on && !self.enabled {
            self.pi.preset(self.cfg.init);
        }
        self.enabled = on;
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// One sample of the centered primary signal `x` (ADC volts) against
    /// the reference sine. Returns the drive amplitude, V.
    #[inline]
    pub fn step(&mut self, x: f64, sin: f64) -> f64 {
        self.amplitude = 2.0 * self.lpf.process(x * sin) / self.ref_gain;
        if !self.enabled {
            return self.cfg.init.clamp(self.pi.lo, self.pi.hi);
        }
        if !self.frozen {
            self.pi.update(self.cfg.setpoint - self.amplitude);
        }
        self.pi.output()
    }

    /// Pickoff-referred amplitude estimate, V.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn setpoint(&self) -> f64 {
        self.cfg.setpoint
    }

    pub fn drive(&self) -> f64 {
        if self.enabled {
            self.pi.output()
        } else {
            self.cfg.init.clamp(self.pi.lo, self.pi.hi)
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn is_clamped(&self) -> bool {
        self.pi.is_clamped()
    }
}
