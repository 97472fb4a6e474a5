//! Simulation kernel: ring, front end, chain, register file and supervisor
//! advanced together in virtual time.
//!
//! Each fast tick (4 µs) samples both ADCs, runs one chain tick, and then
//! advances the ring four physics steps with the DAC outputs held. The
//! supervisor is polled every millisecond. Register transactions only
//! happen between ticks; after any UPDATE that changed the live image the
//! chain re-derives its configuration from it.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afe::{adc_convert, dac_convert, pga_apply, AntiAlias, ClipFlags, PgaConfig};
use crate::dsp::chain::{Chain, ChainConfig, Enables, AA_CORNER, FS_FAST};
use crate::dsp::nco::frequency_word;
use crate::gyro::{Gyro, GyroError, GyroParams, RateInput};
use crate::regmap::layout::{control_bits, dac_enable_bits};
use crate::regmap::{RegError, RegisterFile, SelfcheckReport, StuckBit};
use crate::supervisor::{
    CaptureError, CaptureRequest, ChainObservation, StatusWord, Supervisor, TraceBuffer,
    PHASE_TIMEOUT_MS,
};
use crate::taps::{TapId, TapRate};
use crate::{PHYSICS_DT, PHYSICS_RATE, REFERENCE_TEMP};

/// Physics steps per fast tick.
pub const SUBSTEPS: u32 = PHYSICS_RATE / FS_FAST as u32;
/// Fast ticks per supervisor poll.
pub const TICKS_PER_MS: u64 = FS_FAST as u64 / 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("model fault: {0}")]
    Gyro(#[from] GyroError),
    #[error("register access: {0}")]
    Reg(#[from] RegError),
    #[error("capture: {0}")]
    Capture(#[from] CaptureError),
    #[error("simulation halted after a model fault")]
    Halted,
}

/// Everything needed to build a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub gyro: GyroParams,
    /// Configuration the supervisor programs at start-up.
    pub chain: ChainConfig,
    pub seed: u64,
    /// Initial die temperature, °C.
    pub temperature: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            gyro: GyroParams::default(),
            chain: ChainConfig::default(),
            seed: 1,
            temperature: REFERENCE_TEMP,
        }
    }
}

#[derive(Debug, Clone)]
struct Recorder {
    tap: TapId,
    decimation: u32,
    phase: u32,
    limit: Option<usize>,
    data: Vec<f64>,
}

impl Recorder {
    #[inline]
    fn offer(&mut self, v: f64) {
        if self.limit.is_some_and(|n| self.data.len() >= n) {
            return;
        }
        if self.phase == 0 {
            self.data.push(v);
        }
        self.phase += 1;
        if self.phase == self.decimation {
            self.phase = 0;
        }
    }

    fn full(&self) -> bool {
        self.limit.is_some_and(|n| self.data.len() >= n)
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimConfig,
    gyro: Gyro,
    regs: RegisterFile,
    chain: Chain,
    supervisor: Supervisor,
    aa: [AntiAlias; 2],
    pga: [PgaConfig; 2],
    control_scale: f64,
    drive_v: f64,
    control_v: f64,
    clip: ClipFlags,
    ticks: u64,
    seen_generation: u64,
    /// Probe and capture slots; a handle is a slot index and stays valid
    /// until its slot is vacated.
    recorders: Vec<Option<Recorder>>,
    capture: Option<(CaptureRequest, usize)>,
    halted: Option<GyroError>,
    safe: bool,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        let mut gyro = Gyro::new(cfg.gyro, cfg.seed)?;
        gyro.set_environment(RateInput::RadPerSec(0.0), cfg.temperature)?;
        let regs = RegisterFile::default();
        let live = regs.live_config();
        let chain = Chain::new(&live);
        let mut sim = Self {
            cfg,
            gyro,
            regs,
            chain,
            supervisor: Supervisor::new(live.watchdog_ms as u64 * TICKS_PER_MS),
            aa: [AntiAlias::new(AA_CORNER, PHYSICS_DT); 2],
            pga: [PgaConfig::default(); 2],
            control_scale: live.control_scale(),
            drive_v: 0.0,
            control_v: 0.0,
            clip: ClipFlags::default(),
            ticks: 0,
            seen_generation: u64::MAX,
            recorders: Vec::new(),
            capture: None,
            halted: None,
            safe: false,
        };
        sim.regs
            .set_status("TEMPERATURE", (cfg.temperature as f32).to_bits());
        sim.sync_config();
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Rebuilds the simulation from its configuration: power-on reset.
    pub fn reset(&mut self) -> Result<(), SimError> {
        *self = Self::new(self.cfg)?;
        Ok(())
    }

    fn sync_config(&mut self) {
        if self.regs.generation() == self.seen_generation {
            return;
        }
        self.seen_generation = self.regs.generation();
        let cfg = self.regs.live_config();
        self.chain.configure(&cfg);
        self.pga = [
            PgaConfig { gain_code: cfg.pga_primary },
            PgaConfig { gain_code: cfg.pga_secondary },
        ];
        self.control_scale = cfg.control_scale();
        self.supervisor
            .watchdog
            .set_timeout(cfg.watchdog_ms as u64 * TICKS_PER_MS);
        let control = self.regs.live("CONTROL");
        let dac = self.regs.live("DAC_ENABLE");
        self.chain.set_enables(Enables {
            pll: control & control_bits::PLL_ENABLE != 0,
            agc: control & control_bits::AGC_ENABLE != 0,
            loop_close: control & control_bits::LOOP_ENABLE != 0,
            drive_dac: dac & dac_enable_bits::DRIVE != 0,
            control_dac: dac & dac_enable_bits::CONTROL != 0,
        });
        let t = f32::from_bits(self.regs.live("TEMPERATURE")) as f64;
        self.chain.set_temperature(t);
    }

    /// Simulated time, s.
    pub fn time(&self) -> f64 {
        self.ticks as f64 / FS_FAST
    }

    pub fn time_ms(&self) -> u64 {
        self.ticks / TICKS_PER_MS
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn gyro(&self) -> &Gyro {
        &self.gyro
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn status(&self) -> StatusWord {
        self.supervisor.status()
    }

    pub fn clip_flags(&self) -> ClipFlags {
        self.clip
    }

    /// Voltages currently applied to the drive and rebalance transducers.
    pub fn dac_outputs(&self) -> (f64, f64) {
        (self.drive_v, self.control_v)
    }

    /// True from the tick the watchdog expired: drives zeroed, loops frozen.
    pub fn in_safe_state(&self) -> bool {
        self.safe
    }

    pub fn halted(&self) -> Option<GyroError> {
        self.halted
    }

    #[inline]
    pub fn set_rate(&mut self, rate: RateInput) -> Result<(), SimError> {
        Ok(self.gyro.set_rate(rate.rad_per_sec())?)
    }

    /// Applies rate and temperature. The die temperature reaches the chain
    /// through the read-only temperature register.
    pub fn set_environment(&mut self, rate: RateInput, temp: f64) -> Result<(), SimError> {
        self.gyro.set_environment(rate, temp)?;
        self.regs.set_status("TEMPERATURE", (temp as f32).to_bits());
        self.chain.set_temperature(temp as f32 as f64);
        Ok(())
    }

    // Register access for the outside world: always a chain transaction.

    pub fn read_register(&mut self, name: &str) -> Result<u32, SimError> {
        Ok(self.regs.read_register(name)?)
    }

    pub fn read_real(&mut self, name: &str) -> Result<f64, SimError> {
        Ok(self.regs.read_real(name)?)
    }

    pub fn read_all_registers(&mut self) -> Result<Vec<(&'static str, u32)>, SimError> {
        let values = self.regs.read_all()?;
        Ok(self
            .regs
            .descriptors()
            .iter()
            .zip(values)
            .map(|(d, v)| (d.name, v))
            .collect())
    }

    pub fn write_register(&mut self, name: &str, value: u32) -> Result<(), SimError> {
        let r = self.regs.write_register(name, value);
        self.sync_config();
        Ok(r?)
    }

    pub fn write_registers(&mut self, writes: &[(&str, u32)]) -> Result<(), SimError> {
        let r = self.regs.write_registers(writes);
        self.sync_config();
        Ok(r?)
    }

    pub fn write_real(&mut self, name: &str, value: f64) -> Result<(), SimError> {
        self.write_register(name, (value as f32).to_bits())
    }

    pub fn selfcheck(&mut self, seed: u64) -> Result<SelfcheckReport, SimError> {
        let r = self.regs.selfcheck(seed);
        self.sync_config();
        Ok(r?)
    }

    pub fn registers(&self) -> &RegisterFile {
        &self.regs
    }

    // Test hooks.

    pub fn inject_stuck_bit(&mut self, stuck: Option<StuckBit>) {
        self.regs.inject_stuck_bit(stuck);
    }

    /// Pins the NCO at `hz` (or releases it).
    pub fn force_nco(&mut self, hz: Option<f64>) {
        self.chain
            .pll_mut()
            .force_fw(hz.map(|f| frequency_word(f, FS_FAST)));
    }

    pub fn set_nco_phase(&mut self, phase: u32) {
        self.chain.pll_mut().set_phase(phase);
    }

    pub fn set_watchdog_autokick(&mut self, on: bool) {
        self.supervisor.set_auto_kick(on);
    }

    pub fn kick_watchdog(&mut self) {
        self.supervisor.watchdog.kick();
    }

    // Observation.

    pub fn tap_value(&self, tap: TapId) -> f64 {
        let t = self.chain.taps();
        match tap {
            TapId::X1 => self.gyro.state.x1,
            TapId::X2 => self.gyro.state.x2,
            TapId::PrimaryPickoffAdc => t.primary_adc,
            TapId::PdError => t.pd_error,
            TapId::NcoFw => t.nco_hz,
            TapId::AgcGain => t.agc_gain,
            TapId::DemodI => t.demod_i,
            TapId::DemodQ => t.demod_q,
            TapId::RateFiltered => t.rate_filtered,
            TapId::RateCompensated => t.rate_compensated,
            TapId::OutputVolts => t.output_volts,
        }
    }

    /// `(scale, offset)` used when `tap` is captured.
    pub fn tap_encoding(&self, tap: TapId) -> (f64, f64) {
        let cfg = self.chain.config();
        tap.encoding(&cfg.adc(), cfg.nco_nominal_hz)
    }

    /// Starts recording every `decimation`-th native sample of `tap` as
    /// `f64`, without quantization or limit. Returns a handle.
    pub fn probe(&mut self, tap: TapId, decimation: u32) -> usize {
        self.occupy(Recorder {
            tap,
            decimation: decimation.max(1),
            phase: 0,
            limit: None,
            data: Vec::new(),
        })
    }

    fn occupy(&mut self, rec: Recorder) -> usize {
        match self.recorders.iter().position(Option::is_none) {
            Some(h) => {
                self.recorders[h] = Some(rec);
                h
            }
            None => {
                self.recorders.push(Some(rec));
                self.recorders.len() - 1
            }
        }
    }

    fn vacate(&mut self, handle: usize) -> Option<Recorder> {
        let rec = self.recorders.get_mut(handle).and_then(Option::take);
        while let Some(None) = self.recorders.last() {
            self.recorders.pop();
        }
        rec
    }

    /// Samples recorded so far by probe `handle`; recording continues. A
    /// stale handle yields nothing.
    pub fn drain_probe(&mut self, handle: usize) -> Vec<f64> {
        match self.recorders.get_mut(handle) {
            Some(Some(rec)) if self.capture.map(|(_, h)| h) != Some(handle) => {
                core::mem::take(&mut rec.data)
            }
            _ => Vec::new(),
        }
    }

    /// Stops every probe.
    pub fn clear_probes(&mut self) {
        let keep = self.capture.map(|(_, h)| h);
        for h in 0..self.recorders.len() {
            if Some(h) != keep {
                self.vacate(h);
            }
        }
    }

    /// Arms a lossless capture that fills while the simulation runs.
    pub fn start_capture(&mut self, req: CaptureRequest) -> Result<(), SimError> {
        req.validate()?;
        if self.capture.is_some() {
            return Err(CaptureError::Busy.into());
        }
        let h = self.occupy(Recorder {
            tap: req.tap,
            decimation: req.decimation,
            phase: 0,
            limit: Some(req.count),
            data: Vec::new(),
        });
        self.capture = Some((req, h));
        Ok(())
    }

    /// The finished capture, once complete.
    pub fn take_capture(&mut self) -> Option<TraceBuffer> {
        let (req, h) = self.capture?;
        let full = self.recorders[h].as_ref().is_some_and(Recorder::full);
        if !full && self.halted.is_none() {
            return None;
        }
        let rec = self.vacate(h).expect("capture slot occupied");
        self.capture = None;
        let fs = req.tap.rate().hz() / req.decimation as f64;
        Some(TraceBuffer::encode(
            req.tap,
            fs,
            self.tap_encoding(req.tap),
            req.decimation,
            req.count,
            &rec.data,
        ))
    }

    /// Captures `req.count` samples starting now, running the simulation as
    /// long as needed.
    pub fn capture(&mut self, req: CaptureRequest) -> Result<TraceBuffer, SimError> {
        self.start_capture(req)?;
        loop {
            if let Some(t) = self.take_capture() {
                return Ok(t);
            }
            self.step()?;
        }
    }

    #[inline]
    fn record(&mut self, rate: TapRate) {
        for k in 0..self.recorders.len() {
            let Some(tap) = self.recorders[k].as_ref().map(|r| r.tap) else {
                continue;
            };
            if tap.rate() == rate {
                let v = self.tap_value(tap);
                if let Some(r) = self.recorders[k].as_mut() {
                    r.offer(v);
                }
            }
        }
    }

    // Time.

    /// One fast tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        if let Some(e) = self.halted {
            return Err(SimError::Gyro(e));
        }
        let adc = *self.chain.adc();
        let half = 0.5 * adc.vref;
        let (vp, pclip) = pga_apply(self.aa[0].output(), &self.pga[0], adc.vref);
        let (vs, sclip) = pga_apply(self.aa[1].output(), &self.pga[1], adc.vref);
        let (cp, aclip_p) = adc_convert(half + vp, &adc);
        let (cs, aclip_s) = adc_convert(half + vs, &adc);

        let out = self.chain.tick(cp, cs);

        let dac = *self.chain.dac();
        if self.safe {
            self.drive_v = 0.0;
            self.control_v = 0.0;
        } else {
            // Codes from the chain are always in range.
            self.drive_v = dac_convert(out.drive_code, &dac).unwrap_or(half) - half;
            self.control_v =
                (dac_convert(out.control_code, &dac).unwrap_or(half) - half) * self.control_scale;
        }
        for (hit, bit) in [
            (aclip_p, ClipFlags::ADC_PRIMARY),
            (aclip_s, ClipFlags::ADC_SECONDARY),
            (pclip, ClipFlags::PGA_PRIMARY),
            (sclip, ClipFlags::PGA_SECONDARY),
            (out.drive_clipped, ClipFlags::DAC_DRIVE),
            (out.control_clipped, ClipFlags::DAC_CONTROL),
        ] {
            if hit {
                self.clip.set(bit);
            }
        }

        let physics_probes = self
            .recorders
            .iter()
            .flatten()
            .any(|r| r.tap.rate() == TapRate::Physics);
        for _ in 0..SUBSTEPS {
            let pick = match self.gyro.tick(self.drive_v, self.control_v) {
                Ok(p) => p,
                Err(e) => {
                    self.halted = Some(e);
                    return Err(SimError::Gyro(e));
                }
            };
            self.aa[0].process(pick.primary);
            self.aa[1].process(pick.secondary);
            if physics_probes {
                self.record(TapRate::Physics);
            }
        }

        self.ticks += 1;
        if !self.recorders.is_empty() {
            self.record(TapRate::Fast);
            if out.mid {
                self.record(TapRate::Mid);
            }
            if out.out {
                self.record(TapRate::Out);
            }
        }

        if self.supervisor.watchdog.tick() {
            self.enter_safe_state();
        }
        if self.ticks.is_multiple_of(TICKS_PER_MS) {
            self.poll();
        }
        Ok(())
    }

    fn enter_safe_state(&mut self) {
        self.safe = true;
        self.chain.set_frozen(true);
        self.drive_v = 0.0;
        self.control_v = 0.0;
    }

    fn poll(&mut self) {
        let obs = ChainObservation::of(&self.chain);
        let now = self.time_ms() as u32;
        self.supervisor
            .poll(now, &obs, &mut self.regs, &self.cfg.chain, self.clip);
        self.sync_config();
    }

    pub fn run_ticks(&mut self, n: u64) -> Result<(), SimError> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    /// Runs for `seconds` of simulated time (rounded to whole ticks).
    pub fn run_for(&mut self, seconds: f64) -> Result<(), SimError> {
        self.run_ticks(libm::round(seconds * FS_FAST) as u64)
    }

    /// Runs the start-up sequence to ready or fault.
    pub fn run_startup(&mut self) -> Result<StatusWord, SimError> {
        let limit = 6 * PHASE_TIMEOUT_MS as u64 * TICKS_PER_MS;
        for _ in 0..limit {
            self.step()?;
            let s = self.status();
            if s.ready || s.fault_phase.is_some() || s.watchdog_expired {
                return Ok(s);
            }
        }
        Ok(self.status())
    }
}
