//! Primary-drive PLL: NCO, normalized multiplier phase detector, PI loop
//! filter and a lock detector with hysteresis.
//!
//! The detector low-passes `x·cos` and `x·sin` and takes their angle, so
//! the error is a phase in radians independent of the pickoff amplitude.
//! The PI output is a frequency offset in Hz added to the nominal word.

use libm::{atan2, round, sqrt};
use serde::{Deserialize, Serialize};

use super::filters::OnePole;
use super::nco::{cos_lut, sin_lut, NcoState};
use super::pi::PiController;

/// Smallest primary amplitude at the ADC (V) for which the phase error is
/// considered meaningful by the lock detector.
pub const MIN_LOCK_AMPLITUDE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PllConfig {
    /// Phase-detector low-pass corner, Hz.
    pub pd_corner_hz: f64,
    /// Hz per rad.
    pub kp: f64,
    /// Hz per rad per sample.
    pub ki: f64,
    /// Largest frequency pull around nominal, Hz.
    pub clamp_hz: f64,
    /// Lock threshold on the filtered phase error, rad.
    pub lock_eps: f64,
    pub lock_dwell_ms: u32,
}

impl Default for PllConfig {
    fn default() -> Self {
        Self {
            pd_corner_hz: 500.0,
            kp: 100.0,
            ki: 0.0628,
            clamp_hz: 600.0,
            lock_eps: 0.05,
            lock_dwell_ms: 10,
        }
    }
}

/// Declares lock after the error stayed below `eps` for `dwell` consecutive
/// samples; drops it as soon as the error exceeds `2·eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockDetector {
    eps: f64,
    dwell: u32,
    count: u32,
    locked: bool,
}

impl LockDetector {
    pub fn new(eps: f64, dwell: u32) -> Self {
        Self {
            eps,
            dwell,
            count: 0,
            locked: false,
        }
    }

    /// `qualified` is false when the error cannot be trusted (loop off,
    /// no signal); that forces the unlocked state.
    pub fn update(&mut self, error: f64, qualified: bool) -> bool {
        let a = error.abs();
        if !qualified || !a.is_finite() {
            self.count = 0;
            self.locked = false;
        } else if self.locked {
            if a > 2.0 * self.eps {
                self.locked = false;
                self.count = 0;
            }
        } else if a < self.eps {
            self.count += 1;
            if self.count >= self.dwell {
                self.locked = true;
            }
        } else {
            self.count = 0;
        }
        self.locked
    }

    pub fn is_locked(&self) -> bool {
        self.locked
    }

    pub fn set_threshold(&mut self, eps: f64, dwell: u32) {
        self.eps = eps;
        self.dwell = dwell;
    }
}

#[derive(Debug, Clone)]
pub struct Pll {
    nco: NcoState,
    fw_nom: u32,
    fs: f64,
    lp_c: OnePole,
    lp_s: OnePole,
    pi: PiController,
    lock: LockDetector,
    error: f64,
    enabled: bool,
    frozen: bool,
    forced_fw: Option<u32>,
}

impl Pll {
    pub fn new(cfg: &PllConfig, fw_nom: u32, fs: f64) -> Self {
        let mut pll = Self {
            nco: NcoState::new(fw_nom),
            fw_nom,
            fs,
            lp_c: OnePole::new(cfg.pd_corner_hz, fs),
            lp_s: OnePole::new(cfg.pd_corner_hz, fs),
            pi: PiController::new(cfg.kp, cfg.ki, -cfg.clamp_hz, cfg.clamp_hz),
            lock: LockDetector::new(cfg.lock_eps, 0),
            error: 0.0,
            enabled: false,
            frozen: false,
            forced_fw: None,
        };
        pll.configure(cfg, fw_nom);
        pll
    }

    /// Applies new tunables; loop state is kept.
    pub fn configure(&mut self, cfg: &PllConfig, fw_nom: u32) {
        self.fw_nom = fw_nom;
        self.lp_c.set_corner(cfg.pd_corner_hz, self.fs);
        self.lp_s.set_corner(cfg.pd_corner_hz, self.fs);
        self.pi.set_gains(cfg.kp, cfg.ki);
        self.pi.set_limits(-cfg.clamp_hz, cfg.clamp_hz);
        let dwell = round(cfg.lock_dwell_ms as f64 * 1e-3 * self.fs) as u32;
        self.lock.set_threshold(cfg.lock_eps, dwell.max(1));
        if !self.enabled {
            self.nco.fw = self.fw_nom;
        }
    }

    pub fn set_enabled(&mut self, on: bool) {
        if self.enabled && !on {
            self.pi.reset();
            self.nco.fw = self.fw_nom;
        }
        self.enabled = on;
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// Pins the NCO word regardless of the loop (fault injection).
    pub fn force_fw(&mut self, fw: Option<u32>) {
        self.forced_fw = fw;
        if let Some(w) = fw {
            self.nco.fw = w;
        }
    }

    /// Current NCO phase and its `(sin, cos)`.
    #[inline]
    pub fn reference(&self) -> (u32, f64, f64) {
        let p = self.nco.phase;
        (p, sin_lut(p), cos_lut(p))
    }

    /// One loop iteration on the centered primary sample `x` (V), given the
    /// reference of the current phase. Advances the NCO.
    #[inline]
    pub fn step(&mut self, x: f64, sin: f64, cos: f64) {
        let c = self.lp_c.process(x * cos);
        let s = self.lp_s.process(x * sin);
        self.error = atan2(c, s);
        let amplitude = 2.0 * sqrt(c * c + s * s);
        let qualified = self.enabled
            && !self.frozen
            && self.forced_fw.is_none()
            && self.pi.is_active()
            && amplitude >= MIN_LOCK_AMPLITUDE;
        self.lock.update(self.error, qualified);
        if let Some(w) = self.forced_fw {
            self.nco.fw = w;
        } else if self.enabled && !self.frozen {
            let hz = self.pi.update(self.error);
            let delta = round(hz / self.fs * 4_294_967_296.0) as i64;
            self.nco.fw = (self.fw_nom as i64 + delta).rem_euclid(1 << 32) as u32;
        }
        self.nco.phase = self.nco.phase.wrapping_add(self.nco.fw);
    }

    /// Filtered phase error, rad.
    pub fn error(&self) -> f64 {
        self.error
    }

    pub fn is_locked(&self) -> bool {
        self.lock.is_locked()
    }

    pub fn nco(&self) -> &NcoState {
        &self.nco
    }

    pub fn frequency(&self) -> f64 {
        self.nco.frequency(self.fs)
    }

    pub fn nominal_word(&self) -> u32 {
        self.fw_nom
    }

    /// Sets the NCO phase (used to test lock from arbitrary initial phase).
    pub fn set_phase(&mut self, phase: u32) {
        self.nco.phase = phase;
    }
}
