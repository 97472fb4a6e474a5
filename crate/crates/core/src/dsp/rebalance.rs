//! Force rebalance of the secondary mode.
//!
//! Two PI loops drive the demodulated secondary `i` and `q` to zero. The
//! commands are remodulated onto the drive-phase carrier: the rate command
//! goes out in phase with the primary velocity (`cos`), the quadrature
//! command in phase with the primary displacement (`sin`).

use serde::{Deserialize, Serialize};

use super::pi::PiController;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RebalanceConfig {
    /// DAC volts per demodulated volt.
    pub kp: f64,
    /// Per mid-rate sample.
    pub ki: f64,
}

impl Default for RebalanceConfig {
    fn default() -> Self {
        Self {
            kp: 4.75,
            ki: 0.00447,
        }
    }
}

/// Carrier for the rebalance DAC. With both commands zero the output is
/// zero.
#[inline]
pub fn rebalance_modulate(i_cmd: f64, q_cmd: f64, sin: f64, cos: f64) -> f64 {
    -(i_cmd * cos - q_cmd * sin)
}

#[derive(Debug, Clone)]
pub struct Rebalance {
    pi_i: PiController,
    pi_q: PiController,
    enabled: bool,
    frozen: bool,
}

impl Rebalance {
    pub fn new(cfg: &RebalanceConfig, limit: f64) -> Self {
        Self {
            pi_i: PiController::new(cfg.kp, cfg.ki, -limit, limit),
            pi_q: PiController::new(cfg.kp, cfg.ki, -limit, limit),
            enabled: false,
            frozen: false,
        }
    }

    pub fn configure(&mut self, cfg: &RebalanceConfig, limit: f64) {
        for pi in [&mut self.pi_i, &mut self.pi_q] {
            pi.set_gains(cfg.kp, cfg.ki);
            pi.set_limits(-limit, limit);
        }
    }

    pub fn set_enabled(&mut self, on: bool) {
        if !on {
            self.pi_i.reset();
            self.pi_q.reset();
        }
        self.enabled = on;
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// One mid-rate update from the demodulated secondary.
    #[inline]
    pub fn update(&mut self, i: f64, q: f64) -> (f64, f64) {
        if self.enabled && !self.frozen {
            self.pi_i.update(i);
            self.pi_q.update(q);
        }
        self.commands()
    }

    pub fn commands(&self) -> (f64, f64) {
        if self.enabled {
            (self.pi_i.output(), self.pi_q.output())
        } else {
            (0.0, 0.0)
        }
    }
}
