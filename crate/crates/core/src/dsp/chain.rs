//! The conditioning chain as one synchronous pipeline.
//!
//! [`Chain::tick`] runs once per fast sample (250 kHz): PLL, AGC and drive
//! carrier, demodulation. Every 25th tick the mid-rate (10 kHz) section
//! runs the rebalance loops and feeds both decimator tails; every 250th tick
//! the output section compensates and formats the rate.

use libm::atan;
use serde::{Deserialize, Serialize};

use super::agc::{Agc, AgcConfig};
use super::compensate::CompensationPoly;
use super::decimate::{DecimationPlan, DecimatorTail};
use super::demod::Demodulator;
use super::filters::OnePole;
use super::nco::{cos_lut, frequency_word, radians_to_phase, sin_lut};
use super::output::{output_format, RangeCode};
use super::pll::{Pll, PllConfig};
use super::rebalance::{rebalance_modulate, Rebalance, RebalanceConfig};
use crate::afe::{dac_code_for, first_order_gain, AdcConfig, DacConfig, PgaConfig};

/// Fast chain rate, Hz.
pub const FS_FAST: f64 = 250_000.0;
/// Converter reference, V.
pub const VREF: f64 = 5.0;
/// Anti-alias corner, Hz (a quarter of the converter rate).
pub const AA_CORNER: f64 = FS_FAST / 4.0;
/// Corner of the slow magnitude filters used to judge the secondary null, Hz.
pub const NULL_MONITOR_CORNER: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopMode {
    OpenLoop,
    #[default]
    ClosedLoop,
}

/// Drive-carrier phase lead that cancels the anti-alias lag and the
/// half-sample delay of the DAC hold at `f0`, degrees.
pub fn default_drive_phase_deg(f0: f64) -> f64 {
    (atan(f0 / AA_CORNER) + core::f64::consts::PI * f0 / FS_FAST).to_degrees()
}

/// Every tunable of the chain. The live copy is decoded from the register
/// file; this struct is also the boot configuration the supervisor
/// programs at start-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub adc_bits: u32,
    pub dac_bits: u32,
    pub pga_primary: u8,
    pub pga_secondary: u8,
    /// Rebalance DAC attenuation, `2^ctrl_atten`.
    pub ctrl_atten: u8,
    pub nco_nominal_hz: f64,
    pub drive_phase_deg: f64,
    pub pll: PllConfig,
    pub agc: AgcConfig,
    pub demod_corner_hz: f64,
    pub channel_corner_hz: f64,
    pub rebalance: RebalanceConfig,
    pub mode: LoopMode,
    pub compensation: CompensationPoly,
    pub range: RangeCode,
    pub watchdog_ms: u32,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            adc_bits: 12,
            dac_bits: 12,
            pga_primary: 0,
            pga_secondary: 7,
            ctrl_atten: 3,
            nco_nominal_hz: 15_000.0,
            drive_phase_deg: default_drive_phase_deg(15_000.0),
            pll: PllConfig::default(),
            agc: AgcConfig::default(),
            demod_corner_hz: 1000.0,
            channel_corner_hz: 50.0,
            rebalance: RebalanceConfig::default(),
            mode: LoopMode::ClosedLoop,
            compensation: CompensationPoly::CALIBRATED_CLOSED_LOOP,
            range: RangeCode::Dps75,
            watchdog_ms: 100,
        }
    }
}

impl ChainConfig {
    /// Default configuration for `mode` with its calibrated trim.
    pub fn calibrated(mode: LoopMode) -> Self {
        Self {
            mode,
            compensation: match mode {
                LoopMode::OpenLoop => CompensationPoly::CALIBRATED_OPEN_LOOP,
                LoopMode::ClosedLoop => CompensationPoly::CALIBRATED_CLOSED_LOOP,
            },
            ..Self::default()
        }
    }

    pub fn adc(&self) -> AdcConfig {
        AdcConfig {
            bits: self.adc_bits,
            vref: VREF,
            fs: FS_FAST,
        }
    }

    pub fn dac(&self) -> DacConfig {
        DacConfig {
            bits: self.dac_bits,
            vref: VREF,
            fs: FS_FAST,
        }
    }

    pub fn fw_nominal(&self) -> u32 {
        frequency_word(self.nco_nominal_hz, FS_FAST)
    }

    /// Pickoff-to-ADC gain of the primary path at the nominal frequency.
    pub fn primary_path_gain(&self) -> f64 {
        pga_gain(self.pga_primary) * first_order_gain(AA_CORNER, self.nco_nominal_hz)
    }

    /// Transducer volts per rebalance DAC volt.
    pub fn control_scale(&self) -> f64 {
        1.0 / (1u64 << self.ctrl_atten) as f64
    }
}

fn pga_gain(code: u8) -> f64 {
    PgaConfig { gain_code: code }.gain()
}

/// Largest bipolar swing around midscale, V.
fn dac_swing(dac: &DacConfig) -> f64 {
    (dac.midscale() - 1) as f64 * dac.lsb()
}

/// Which blocks the supervisor has switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Enables {
    pub pll: bool,
    pub agc: bool,
    pub loop_close: bool,
    pub drive_dac: bool,
    pub control_dac: bool,
}

/// Latest value on every chain node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChainTaps {
    /// Primary ADC sample, V.
    pub primary_adc: f64,
    /// Filtered phase error, rad.
    pub pd_error: f64,
    /// NCO frequency, Hz.
    pub nco_hz: f64,
    /// Drive carrier amplitude, V.
    pub agc_gain: f64,
    /// Pickoff-referred primary amplitude estimate, V.
    pub amplitude: f64,
    pub demod_i: f64,
    pub demod_q: f64,
    pub i_cmd: f64,
    pub q_cmd: f64,
    /// Decimated open-loop rate channel (ADC volts).
    pub rate_open: f64,
    /// Decimated closed-loop rate channel (DAC volts).
    pub rate_closed: f64,
    /// Rate channel of the active mode.
    pub rate_filtered: f64,
    /// °/s
    pub rate_compensated: f64,
    pub output_volts: f64,
}

/// DAC codes for the next hold interval plus the rate events of this tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FastOutput {
    pub drive_code: u32,
    pub control_code: u32,
    pub drive_clipped: bool,
    pub control_clipped: bool,
    /// A mid-rate sample was produced.
    pub mid: bool,
    /// An output-rate sample was produced.
    pub out: bool,
}

#[derive(Debug, Clone)]
pub struct Chain {
    cfg: ChainConfig,
    adc: AdcConfig,
    dac: DacConfig,
    pll: Pll,
    agc: Agc,
    demod: Demodulator,
    rebalance: Rebalance,
    tail_open: DecimatorTail,
    tail_closed: DecimatorTail,
    null_i: OnePole,
    null_q: OnePole,
    drive_phase: u32,
    enables: Enables,
    frozen: bool,
    temperature: f64,
    output_clamped: bool,
    taps: ChainTaps,
}

impl Chain {
    pub fn new(cfg: &ChainConfig) -> Self {
        let plan = DecimationPlan::default();
        let adc = cfg.adc();
        let dac = cfg.dac();
        let swing = dac_swing(&dac);
        let mut chain = Self {
            cfg: *cfg,
            adc,
            dac,
            pll: Pll::new(&cfg.pll, cfg.fw_nominal(), FS_FAST),
            agc: Agc::new(&cfg.agc, FS_FAST, cfg.primary_path_gain(), swing),
            demod: Demodulator::new(plan.boxcar, FS_FAST, cfg.demod_corner_hz),
            rebalance: Rebalance::new(&cfg.rebalance, swing),
            tail_open: DecimatorTail::new(&plan, cfg.channel_corner_hz),
            tail_closed: DecimatorTail::new(&plan, cfg.channel_corner_hz),
            null_i: OnePole::new(NULL_MONITOR_CORNER, plan.fs_mid()),
            null_q: OnePole::new(NULL_MONITOR_CORNER, plan.fs_mid()),
            drive_phase: radians_to_phase(cfg.drive_phase_deg.to_radians()),
            enables: Enables::default(),
            frozen: false,
            temperature: crate::REFERENCE_TEMP,
            output_clamped: false,
            taps: ChainTaps::default(),
        };
        chain.configure(cfg);
        chain
    }

    /// Applies a new configuration while keeping all filter and loop state.
    pub fn configure(&mut self, cfg: &ChainConfig) {
        self.cfg = *cfg;
        self.adc = cfg.adc();
        self.dac = cfg.dac();
        let swing = dac_swing(&self.dac);
        self.pll.configure(&cfg.pll, cfg.fw_nominal());
        self.agc
            .configure(&cfg.agc, cfg.primary_path_gain(), swing);
        self.demod.set_corner(cfg.demod_corner_hz);
        self.rebalance.configure(&cfg.rebalance, swing);
        self.tail_open.set_channel_corner(cfg.channel_corner_hz);
        self.tail_closed.set_channel_corner(cfg.channel_corner_hz);
        self.drive_phase = radians_to_phase(cfg.drive_phase_deg.to_radians());
        self.apply_enables();
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn set_enables(&mut self, enables: Enables) {
        self.enables = enables;
        self.apply_enables();
    }

    fn apply_enables(&mut self) {
        let e = self.enables;
        self.pll.set_enabled(e.pll);
        self.agc.set_enabled(e.agc);
        let closed = e.loop_close && self.cfg.mode == LoopMode::ClosedLoop;
        if closed != self.rebalance.is_enabled() {
            self.rebalance.set_enabled(closed);
        }
    }

    pub fn enables(&self) -> Enables {
        self.enables
    }

    /// Holds every loop at its current output (safe state).
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
        self.pll.set_frozen(frozen);
        self.agc.set_frozen(frozen);
        self.rebalance.set_frozen(frozen);
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Die temperature seen by the compensation, °C.
    pub fn set_temperature(&mut self, t: f64) {
        self.temperature = t;
    }

    pub fn pll(&self) -> &Pll {
        &self.pll
    }

    pub fn pll_mut(&mut self) -> &mut Pll {
        &mut self.pll
    }

    pub fn agc(&self) -> &Agc {
        &self.agc
    }

    pub fn taps(&self) -> &ChainTaps {
        &self.taps
    }

    /// Magnitudes of the slowly filtered demodulated secondary, V.
    pub fn null_monitor(&self) -> (f64, f64) {
        (self.null_i.output().abs(), self.null_q.output().abs())
    }

    /// Sticky output-range clamp.
    pub fn output_clamped(&self) -> bool {
        self.output_clamped
    }

    pub fn clear_output_clamp(&mut self) {
        self.output_clamped = false;
    }

    pub fn adc(&self) -> &AdcConfig {
        &self.adc
    }

    pub fn dac(&self) -> &DacConfig {
        &self.dac
    }

    /// One fast tick on the two ADC codes.
    #[inline]
    pub fn tick(&mut self, primary_code: u32, secondary_code: u32) -> FastOutput {
        let xp = self.adc.centered_volts(primary_code);
        let xs = self.adc.centered_volts(secondary_code);
        let (phase, s, c) = self.pll.reference();
        let pd = phase.wrapping_add(self.drive_phase);
        let (s_d, c_d) = (sin_lut(pd), cos_lut(pd));

        let amp = self.agc.step(xp, s);
        self.pll.step(xp, s, c);

        let mut out = FastOutput::default();
        if let Some((i, q)) = self.demod.push(xs, s, c) {
            out.mid = true;
            self.mid_tick(i, q, &mut out);
        }

        let drive_v = if self.enables.drive_dac { amp * c_d } else { 0.0 };
        let (i_cmd, q_cmd) = self.rebalance.commands();
        let control_v = if self.enables.control_dac {
            rebalance_modulate(i_cmd, q_cmd, s_d, c_d)
        } else {
            0.0
        };
        let half = 0.5 * self.dac.vref;
        (out.drive_code, out.drive_clipped) = dac_code_for(half + drive_v, &self.dac);
        (out.control_code, out.control_clipped) = dac_code_for(half + control_v, &self.dac);

        let t = &mut self.taps;
        t.primary_adc = primary_code as f64 * self.adc.lsb();
        t.pd_error = self.pll.error();
        t.nco_hz = self.pll.frequency();
        t.agc_gain = amp;
        t.amplitude = self.agc.amplitude();
        out
    }

    fn mid_tick(&mut self, i: f64, q: f64, out: &mut FastOutput) {
        let (i_cmd, q_cmd) = self.rebalance.update(i, q);
        self.null_i.process(i);
        self.null_q.process(q);
        let t = &mut self.taps;
        t.demod_i = i;
        t.demod_q = q;
        t.i_cmd = i_cmd;
        t.q_cmd = q_cmd;
        let open = self.tail_open.push(i);
        let closed = self.tail_closed.push(i_cmd);
        if let (Some(open), Some(closed)) = (open, closed) {
            out.out = true;
            let raw = match self.cfg.mode {
                LoopMode::OpenLoop => open,
                LoopMode::ClosedLoop => closed,
            };
            let rate = self.cfg.compensation.apply(raw, self.temperature);
            let (volts, clamped) = output_format(rate, self.cfg.range);
            self.output_clamped |= clamped;
            let t = &mut self.taps;
            t.rate_open = open;
            t.rate_closed = closed;
            t.rate_filtered = raw;
            t.rate_compensated = rate;
            t.output_volts = volts;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_phase_lead() {
        let d = default_drive_phase_deg(15_000.0);
        assert!((d - 24.296).abs() < 1e-3, "{d}");
    }

    #[test]
    fn idle_chain_outputs_midscale_and_null() {
        let cfg = ChainConfig {
            compensation: CompensationPoly::identity(),
            ..ChainConfig::default()
        };
        let mut chain = Chain::new(&cfg);
        let mid = cfg.adc().midscale();
        let mut outs = 0;
        for _ in 0..250_000 {
            let o = chain.tick(mid, mid);
            assert_eq!(o.drive_code, cfg.dac().midscale());
            assert_eq!(o.control_code, cfg.dac().midscale());
            outs += o.out as u32;
        }
        assert_eq!(outs, 1000);
        assert_eq!(chain.taps().output_volts, 2.5);
    }
}
