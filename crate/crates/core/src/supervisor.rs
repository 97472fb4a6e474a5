//! Start-up sequencing, status monitoring, watchdog and trace capture.
//!
//! The supervisor is polled once per simulated millisecond. It programs the
//! boot configuration into the register file one phase at a time and only
//! through scan-chain transactions, then watches the chain and publishes a
//! [`StatusWord`] into the read-only status registers.

use alloc::vec::Vec;
use libm::round;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afe::ClipFlags;
use crate::dsp::chain::{Chain, ChainConfig, LoopMode};
use crate::regmap::layout::{control_bits, dac_enable_bits, status_bits};
use crate::regmap::{Group, RegisterFile};
use crate::taps::TapId;

/// Poll period, ms.
pub const POLL_PERIOD_MS: u32 = 1;
/// Budget for each start-up phase, ms.
pub const PHASE_TIMEOUT_MS: u32 = 1000;
/// The AGC is settled once the amplitude stayed this close to the setpoint
/// (relative) for [`SETTLE_DWELL_MS`].
pub const SETTLE_BAND: f64 = 0.01;
pub const SETTLE_DWELL_MS: u32 = 20;
/// The secondary is nulled once both slow magnitudes stayed below this (V)
/// for [`NULL_DWELL_MS`].
pub const NULL_THRESHOLD: f64 = 0.05;
pub const NULL_DWELL_MS: u32 = 10;
/// Trace memory, 16-bit words: 512 Kib.
pub const TRACE_CAPACITY: usize = 512 * 1024 / 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartupPhase {
    #[default]
    Reset,
    Configure,
    PllLock,
    AgcSettle,
    LoopClose,
    Ready,
    Fault,
}

impl StartupPhase {
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            StartupPhase::Reset => "reset",
            StartupPhase::Configure => "configure",
            StartupPhase::PllLock => "pll_lock",
            StartupPhase::AgcSettle => "agc_settle",
            StartupPhase::LoopClose => "loop_close",
            StartupPhase::Ready => "ready",
            StartupPhase::Fault => "fault",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatusWord {
    pub pll_locked: bool,
    pub agc_settled: bool,
    pub secondary_nulled: bool,
    pub config_fault: bool,
    pub clip_fault: bool,
    pub watchdog_expired: bool,
    pub ready: bool,
    pub phase: StartupPhase,
    /// Phase in which start-up failed.
    pub fault_phase: Option<StartupPhase>,
    pub turn_on_time_ms: Option<u32>,
}

impl StatusWord {
    pub fn bits(&self) -> u32 {
        use status_bits::*;
        let mut b = 0;
        for (on, bit) in [
            (self.pll_locked, PLL_LOCKED),
            (self.agc_settled, AGC_SETTLED),
            (self.secondary_nulled, SECONDARY_NULLED),
            (self.config_fault, CONFIG_FAULT),
            (self.clip_fault, CLIP_FAULT),
            (self.watchdog_expired, WATCHDOG_EXPIRED),
            (self.ready, READY),
        ] {
            if on {
                b |= bit;
            }
        }
        b
    }
}

/// Timer that expires unless kicked; expiry is sticky until reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Watchdog {
    timeout_ticks: u64,
    since_kick: u64,
    expired: bool,
}

impl Watchdog {
    pub fn new(timeout_ticks: u64) -> Self {
        Self {
            timeout_ticks,
            since_kick: 0,
            expired: false,
        }
    }

    pub fn set_timeout(&mut self, ticks: u64) {
        self.timeout_ticks = ticks;
    }

    pub fn kick(&mut self) {
        if !self.expired {
            self.since_kick = 0;
        }
    }

    /// Advances one tick; returns true on the tick the timer expires.
    #[inline]
    pub fn tick(&mut self) -> bool {
        if self.expired {
            return false;
        }
        self.since_kick += 1;
        if self.since_kick >= self.timeout_ticks {
            self.expired = true;
            return true;
        }
        false
    }

    pub fn expired(&self) -> bool {
        self.expired
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureRequest {
    pub tap: TapId,
    pub count: usize,
    #[serde(default = "one")]
    pub decimation: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CaptureError {
    #[error("count {0} exceeds the trace capacity of 32768 words")]
    Capacity(usize),
    #[error("count must be at least 1")]
    Empty,
    #[error("decimation must be at least 1")]
    Decimation,
    #[error("a capture is already running")]
    Busy,
}

impl CaptureRequest {
    pub fn validate(&self) -> Result<(), CaptureError> {
        if self.count > TRACE_CAPACITY {
            return Err(CaptureError::Capacity(self.count));
        }
        if self.count == 0 {
            return Err(CaptureError::Empty);
        }
        if self.decimation == 0 {
            return Err(CaptureError::Decimation);
        }
        Ok(())
    }
}

/// Samples of one tap, 16-bit quantized with the scale and offset needed to
/// recover engineering units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBuffer {
    pub tap: TapId,
    /// Sample rate of the stored samples, Hz.
    pub fs: f64,
    pub scale: f64,
    pub offset: f64,
    pub decimation: u32,
    pub requested: usize,
    /// Set when fewer than `requested` samples could be taken.
    pub truncated: bool,
    pub codes: Vec<i16>,
}

impl TraceBuffer {
    pub fn encode(
        tap: TapId,
        fs: f64,
        (scale, offset): (f64, f64),
        decimation: u32,
        requested: usize,
        values: &[f64],
    ) -> Self {
        let codes = values
            .iter()
            .map(|v| round((v - offset) / scale).clamp(-32768.0, 32767.0) as i16)
            .collect::<Vec<_>>();
        Self {
            tap,
            fs,
            scale,
            offset,
            decimation,
            requested,
            truncated: codes.len() < requested,
            codes,
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        self.offset + self.codes[k] as f64 * self.scale
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.codes.len()).map(|k| self.value(k)).collect()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// What the supervisor observes of the chain at a poll.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainObservation {
    pub locked: bool,
    pub agc_enabled: bool,
    pub amplitude: f64,
    pub setpoint: f64,
    pub null_monitor: (f64, f64),
    pub loop_closed: bool,
}

impl ChainObservation {
    pub fn of(chain: &Chain) -> Self {
        let e = chain.enables();
        Self {
            locked: chain.pll().is_locked(),
            agc_enabled: chain.agc().is_enabled(),
            amplitude: chain.agc().amplitude(),
            setpoint: chain.agc().setpoint(),
            null_monitor: chain.null_monitor(),
            loop_closed: e.loop_close && chain.config().mode == LoopMode::ClosedLoop,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Supervisor {
    phase: StartupPhase,
    phase_start_ms: u32,
    fault_phase: Option<StartupPhase>,
    turn_on_ms: Option<u32>,
    settle_ms: u32,
    null_ms: u32,
    status: StatusWord,
    pub watchdog: Watchdog,
    auto_kick: bool,
}

impl Supervisor {
    pub fn new(watchdog_ticks: u64) -> Self {
        Self {
            phase: StartupPhase::Reset,
            phase_start_ms: 0,
            fault_phase: None,
            turn_on_ms: None,
            settle_ms: 0,
            null_ms: 0,
            status: StatusWord::default(),
            watchdog: Watchdog::new(watchdog_ticks),
            auto_kick: true,
        }
    }

    pub fn status(&self) -> StatusWord {
        self.status
    }

    pub fn phase(&self) -> StartupPhase {
        self.phase
    }

    /// Test hook: stop kicking the watchdog from the poll routine.
    pub fn set_auto_kick(&mut self, on: bool) {
        self.auto_kick = on;
    }

    fn fault(&mut self, now_ms: u32) {
        self.fault_phase = Some(self.phase);
        self.phase = StartupPhase::Fault;
        self.phase_start_ms = now_ms;
    }

    fn enter(&mut self, phase: StartupPhase, now_ms: u32) {
        self.phase = phase;
        self.phase_start_ms = now_ms;
    }

    fn set_bits(regs: &mut RegisterFile, name: &str, bits: u32) -> Result<(), ()> {
        let v = regs.live(name) | bits;
        regs.write_register(name, v).map_err(|_| ())
    }

    fn program(regs: &mut RegisterFile, boot: &ChainConfig, groups: &[Group]) -> Result<(), ()> {
        for g in groups {
            let writes = crate::regmap::layout::group_writes(regs.descriptors(), boot, *g);
            regs.write_registers(&writes).map_err(|_| ())?;
        }
        Ok(())
    }

    /// One poll at simulated time `now_ms`. Register writes issued here go
    /// through the scan chain; the caller re-derives the chain configuration
    /// when the register generation moved.
    pub fn poll(
        &mut self,
        now_ms: u32,
        obs: &ChainObservation,
        regs: &mut RegisterFile,
        boot: &ChainConfig,
        clip: ClipFlags,
    ) {
        if self.auto_kick {
            self.watchdog.kick();
        }
        let in_band = obs.agc_enabled
            && obs.setpoint > 0.0
            && ((obs.amplitude - obs.setpoint) / obs.setpoint).abs() <= SETTLE_BAND;
        self.settle_ms = if in_band { self.settle_ms + POLL_PERIOD_MS } else { 0 };
        let nulled = obs.loop_closed
            && obs.null_monitor.0 < NULL_THRESHOLD
            && obs.null_monitor.1 < NULL_THRESHOLD;
        self.null_ms = if nulled { self.null_ms + POLL_PERIOD_MS } else { 0 };
        let settled = self.settle_ms >= SETTLE_DWELL_MS;
        let is_nulled = self.null_ms >= NULL_DWELL_MS;
        let elapsed = now_ms.saturating_sub(self.phase_start_ms);

        if !self.watchdog.expired() {
            match self.phase {
                StartupPhase::Reset => {
                    self.enter(StartupPhase::Configure, now_ms);
                    let groups = [Group::Afe, Group::Loop, Group::Compensation, Group::Output];
                    if Self::program(regs, boot, &groups).is_err() {
                        self.fault(now_ms);
                    } else {
                        self.enter(StartupPhase::PllLock, now_ms);
                        let ok = Self::program(regs, boot, &[Group::Pll]).is_ok()
                            && Self::set_bits(regs, "CONTROL", control_bits::PLL_ENABLE).is_ok()
                            && Self::set_bits(regs, "DAC_ENABLE", dac_enable_bits::DRIVE).is_ok();
                        if !ok {
                            self.fault(now_ms);
                        }
                    }
                }
                StartupPhase::PllLock => {
                    if obs.locked {
                        self.enter(StartupPhase::AgcSettle, now_ms);
                        let ok = Self::program(regs, boot, &[Group::Agc]).is_ok()
                            && Self::set_bits(regs, "CONTROL", control_bits::AGC_ENABLE).is_ok();
                        if !ok {
                            self.fault(now_ms);
                        }
                    } else if elapsed >= PHASE_TIMEOUT_MS {
                        self.fault(now_ms);
                    }
                }
                StartupPhase::AgcSettle => {
                    if settled && obs.locked {
                        if regs.live_config().mode == LoopMode::ClosedLoop {
                            self.enter(StartupPhase::LoopClose, now_ms);
                            let ok = Self::set_bits(regs, "CONTROL", control_bits::LOOP_ENABLE)
                                .is_ok()
                                && Self::set_bits(regs, "DAC_ENABLE", dac_enable_bits::CONTROL)
                                    .is_ok();
                            if !ok {
                                self.fault(now_ms);
                            }
                        } else {
                            self.enter(StartupPhase::Ready, now_ms);
                            self.turn_on_ms = Some(now_ms);
                        }
                    } else if elapsed >= PHASE_TIMEOUT_MS {
                        self.fault(now_ms);
                    }
                }
                StartupPhase::LoopClose => {
                    if is_nulled {
                        self.enter(StartupPhase::Ready, now_ms);
                        self.turn_on_ms = Some(now_ms);
                    } else if elapsed >= PHASE_TIMEOUT_MS {
                        self.fault(now_ms);
                    }
                }
                StartupPhase::Configure | StartupPhase::Ready | StartupPhase::Fault => {}
            }
        }

        let watchdog_expired = self.watchdog.expired();
        self.status = StatusWord {
            pll_locked: obs.locked,
            agc_settled: settled,
            secondary_nulled: is_nulled,
            config_fault: regs.config_fault() || self.fault_phase.is_some(),
            clip_fault: clip.any(),
            watchdog_expired,
            ready: self.phase == StartupPhase::Ready
                && obs.locked
                && settled
                && !watchdog_expired,
            phase: self.phase,
            fault_phase: self.fault_phase,
            turn_on_time_ms: self.turn_on_ms,
        };
        regs.set_status("STATUS", self.status.bits());
        regs.set_status("STARTUP_PHASE", self.phase.code());
        regs.set_status("FAULT_PHASE", self.fault_phase.map_or(0, |p| p.code()));
        regs.set_status("TURN_ON_TIME_MS", self.turn_on_ms.unwrap_or(0));
        regs.set_status("CLIP_FLAGS", clip.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_is_512_kib() {
        assert_eq!(TRACE_CAPACITY, 32768);
        let req = CaptureRequest {
            tap: TapId::OutputVolts,
            count: 32769,
            decimation: 1,
        };
        assert_eq!(req.validate(), Err(CaptureError::Capacity(32769)));
    }

    #[test]
    fn watchdog_expires_on_time_and_sticks() {
        let mut w = Watchdog::new(100);
        for _ in 0..99 {
            assert!(!w.tick());
        }
        assert!(w.tick());
        assert!(w.expired());
        w.kick();
        assert!(w.expired());
    }

    #[test]
    fn regular_kicks_keep_watchdog_alive() {
        let mut w = Watchdog::new(100);
        for k in 0..10_000 {
            if k % 50 == 0 {
                w.kick();
            }
            w.tick();
        }
        assert!(!w.expired());
    }

    #[test]
    fn trace_encoding_roundtrip() {
        let values = [2.5, 2.5001, 2.4999, 3.0];
        let t = TraceBuffer::encode(TapId::OutputVolts, 1000.0, (2.5 / 32768.0, 2.5), 1, 4, &values);
        for (k, v) in values.iter().enumerate() {
            assert!((t.value(k) - v).abs() <= 0.5 * t.scale + 1e-15);
        }
        assert!(!t.truncated);
    }

    #[test]
    fn status_bits() {
        let s = StatusWord {
            ready: true,
            pll_locked: true,
            ..StatusWord::default()
        };
        assert_eq!(s.bits(), status_bits::READY | status_bits::PLL_LOCKED);
    }
}
