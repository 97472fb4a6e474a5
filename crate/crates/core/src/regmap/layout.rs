//! The register set and its mapping onto [`ChainConfig`].
//!
//! Real-valued parameters are stored as IEEE-754 single-precision bit
//! patterns in 32-bit registers. Chain order is address order.

use alloc::vec::Vec;

use super::{Access, FieldMap, Group, ImageView, Kind, RegisterDescriptor, Validator};
use crate::dsp::chain::{ChainConfig, LoopMode, FS_FAST};
use crate::dsp::compensate::CompensationPoly;
use crate::dsp::output::RangeCode;

pub mod status_bits {
    pub const PLL_LOCKED: u32 = 1 << 0;
    pub const AGC_SETTLED: u32 = 1 << 1;
    pub const SECONDARY_NULLED: u32 = 1 << 2;
    pub const CONFIG_FAULT: u32 = 1 << 3;
    pub const CLIP_FAULT: u32 = 1 << 4;
    pub const WATCHDOG_EXPIRED: u32 = 1 << 5;
    pub const READY: u32 = 1 << 6;
}

pub mod control_bits {
    pub const PLL_ENABLE: u32 = 1 << 0;
    pub const AGC_ENABLE: u32 = 1 << 1;
    pub const LOOP_ENABLE: u32 = 1 << 2;
}

pub mod dac_enable_bits {
    pub const DRIVE: u32 = 1 << 0;
    pub const CONTROL: u32 = 1 << 1;
}

macro_rules! real {
    ($($f:tt)+) => {
        Some(FieldMap {
            get: |c: &ChainConfig| (c.$($f)+ as f32).to_bits(),
            set: |c: &mut ChainConfig, v: u32| c.$($f)+ = f32::from_bits(v) as f64,
        })
    };
}

macro_rules! uint {
    ($t:ty, $($f:tt)+) => {
        Some(FieldMap {
            get: |c: &ChainConfig| c.$($f)+ as u32,
            set: |c: &mut ChainConfig, v: u32| c.$($f)+ = v as $t,
        })
    };
}

fn real(v: u32) -> f64 {
    f32::from_bits(v) as f64
}

fn finite(v: u32, _: &ImageView<'_>) -> Result<(), &'static str> {
    if real(v).is_finite() {
        Ok(())
    } else {
        Err("value is not finite")
    }
}

fn non_negative(v: u32, _: &ImageView<'_>) -> Result<(), &'static str> {
    let x = real(v);
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err("value must be finite and non-negative")
    }
}

fn positive(v: u32, _: &ImageView<'_>) -> Result<(), &'static str> {
    let x = real(v);
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err("value must be finite and positive")
    }
}

fn converter_bits(v: u32, _: &ImageView<'_>) -> Result<(), &'static str> {
    if (8..=16).contains(&v) {
        Ok(())
    } else {
        Err("resolution must be 8 to 16 bits")
    }
}

fn below_fast_nyquist(v: u32, _: &ImageView<'_>) -> Result<(), &'static str> {
    let x = real(v);
    if x > 0.0 && x < FS_FAST / 2.0 {
        Ok(())
    } else {
        Err("frequency must lie in (0, 125000) Hz")
    }
}

fn below_mid_nyquist(v: u32, _: &ImageView<'_>) -> Result<(), &'static str> {
    let x = real(v);
    if x > 0.0 && x < 5000.0 {
        Ok(())
    } else {
        Err("corner must lie in (0, 5000) Hz")
    }
}

fn below_out_nyquist(v: u32, _: &ImageView<'_>) -> Result<(), &'static str> {
    let x = real(v);
    if x > 0.0 && x < 500.0 {
        Ok(())
    } else {
        Err("corner must lie in (0, 500) Hz")
    }
}

fn compensation(_: u32, img: &ImageView<'_>) -> Result<(), &'static str> {
    let p = CompensationPoly {
        o0: img.real("COMP_O0"),
        o1: img.real("COMP_O1"),
        o2: img.real("COMP_O2"),
        g0: img.real("COMP_G0"),
        g1: img.real("COMP_G1"),
        g2: img.real("COMP_G2"),
    };
    if ![p.o0, p.o1, p.o2].iter().all(|v| v.is_finite()) {
        return Err("offset polynomial is not finite");
    }
    p.validate()
        .map_err(|_| "gain polynomial must stay positive over -40..125 degC")
}

fn range_code(v: u32, _: &ImageView<'_>) -> Result<(), &'static str> {
    RangeCode::from_code(v).map(|_| ()).ok_or("range code must be 0, 1 or 2")
}

fn nonzero(v: u32, _: &ImageView<'_>) -> Result<(), &'static str> {
    if v > 0 {
        Ok(())
    } else {
        Err("value must be non-zero")
    }
}

struct Row {
    name: &'static str,
    address: u16,
    width: u8,
    access: Access,
    kind: Kind,
    group: Group,
    map: Option<FieldMap>,
    validator: Option<Validator>,
    description: &'static str,
}

#[allow(clippy::too_many_arguments)]
const fn row(
    name: &'static str,
    address: u16,
    width: u8,
    access: Access,
    kind: Kind,
    group: Group,
    map: Option<FieldMap>,
    validator: Option<Validator>,
    description: &'static str,
) -> Row {
    Row {
        name,
        address,
        width,
        access,
        kind,
        group,
        map,
        validator,
        description,
    }
}

fn rows() -> Vec<Row> {
    use Access::{Ro, Rw};
    use Group::*;
    use Kind::{Flags, Real, Uint};
    alloc::vec![
        row("STATUS", 0x00, 7, Ro, Flags, Status, None, None,
            "pll_locked, agc_settled, secondary_nulled, config_fault, clip_fault, watchdog_expired, ready"),
        row("STARTUP_PHASE", 0x01, 3, Ro, Uint, Status, None, None,
            "0 reset, 1 configure, 2 pll_lock, 3 agc_settle, 4 loop_close, 5 ready, 6 fault"),
        row("FAULT_PHASE", 0x02, 3, Ro, Uint, Status, None, None,
            "phase in which start-up faulted, 0 if none"),
        row("TURN_ON_TIME_MS", 0x03, 16, Ro, Uint, Status, None, None,
            "time from reset to ready, ms"),
        row("CLIP_FLAGS", 0x04, 6, Ro, Flags, Status, None, None,
            "sticky: adc_pri, adc_sec, pga_pri, pga_sec, dac_drive, dac_control"),
        row("TEMPERATURE", 0x05, 32, Ro, Real, Status, None, None,
            "die temperature, degC"),
        row("CONTROL", 0x08, 3, Rw, Flags, Control, None, None,
            "pll_enable, agc_enable, loop_enable"),
        row("DAC_ENABLE", 0x09, 2, Rw, Flags, Control, None, None,
            "drive, control"),
        row("ADC_BITS", 0x10, 5, Rw, Uint, Afe, uint!(u32, adc_bits), Some(converter_bits),
            "ADC resolution, bits"),
        row("DAC_BITS", 0x11, 5, Rw, Uint, Afe, uint!(u32, dac_bits), Some(converter_bits),
            "DAC resolution, bits"),
        row("PGA_PRIMARY", 0x12, 3, Rw, Uint, Afe, uint!(u8, pga_primary), None,
            "primary PGA gain code, gain 2^code"),
        row("PGA_SECONDARY", 0x13, 3, Rw, Uint, Afe, uint!(u8, pga_secondary), None,
            "secondary PGA gain code, gain 2^code"),
        row("CTRL_ATTEN", 0x14, 4, Rw, Uint, Afe, uint!(u8, ctrl_atten), None,
            "rebalance DAC attenuation, 2^code"),
        row("NCO_NOMINAL_HZ", 0x20, 32, Rw, Real, Pll, real!(nco_nominal_hz), Some(below_fast_nyquist),
            "free-running NCO frequency, Hz"),
        row("DRIVE_PHASE_DEG", 0x21, 32, Rw, Real, Pll, real!(drive_phase_deg), Some(finite),
            "drive and rebalance carrier phase lead, deg"),
        row("PLL_PD_CORNER_HZ", 0x22, 32, Rw, Real, Pll, real!(pll.pd_corner_hz), Some(below_fast_nyquist),
            "phase detector low-pass corner, Hz"),
        row("PLL_KP", 0x23, 32, Rw, Real, Pll, real!(pll.kp), Some(non_negative),
            "PLL proportional gain, Hz/rad"),
        row("PLL_KI", 0x24, 32, Rw, Real, Pll, real!(pll.ki), Some(non_negative),
            "PLL integral gain, Hz/rad per sample"),
        row("PLL_CLAMP_HZ", 0x25, 32, Rw, Real, Pll, real!(pll.clamp_hz), Some(positive),
            "PLL pull range, Hz"),
        row("LOCK_EPS", 0x26, 32, Rw, Real, Pll, real!(pll.lock_eps), Some(positive),
            "lock threshold, rad"),
        row("LOCK_DWELL_MS", 0x27, 8, Rw, Uint, Pll, uint!(u32, pll.lock_dwell_ms), Some(nonzero),
            "lock dwell, ms"),
        row("AGC_SETPOINT", 0x30, 32, Rw, Real, Agc, real!(agc.setpoint), Some(positive),
            "primary pickoff amplitude, V"),
        row("AGC_KP", 0x31, 32, Rw, Real, Agc, real!(agc.kp), Some(non_negative),
            "AGC proportional gain, V/V"),
        row("AGC_KI", 0x32, 32, Rw, Real, Agc, real!(agc.ki), Some(non_negative),
            "AGC integral gain, V/V per sample"),
        row("AGC_INIT", 0x33, 32, Rw, Real, Agc, real!(agc.init), Some(non_negative),
            "drive amplitude before the AGC closes, V"),
        row("AGC_LPF_HZ", 0x34, 32, Rw, Real, Agc, real!(agc.lpf_corner_hz), Some(below_fast_nyquist),
            "amplitude estimate corner, Hz"),
        row("DEMOD_CORNER_HZ", 0x40, 32, Rw, Real, Loop, real!(demod_corner_hz), Some(below_mid_nyquist),
            "demodulator low-pass corner, Hz"),
        row("CHANNEL_CORNER_HZ", 0x41, 32, Rw, Real, Loop, real!(channel_corner_hz), Some(below_out_nyquist),
            "output channel filter corner, Hz"),
        row("RB_KP", 0x42, 32, Rw, Real, Loop, real!(rebalance.kp), Some(non_negative),
            "rebalance proportional gain"),
        row("RB_KI", 0x43, 32, Rw, Real, Loop, real!(rebalance.ki), Some(non_negative),
            "rebalance integral gain, per sample"),
        row("LOOP_MODE", 0x44, 1, Rw, Uint, Loop,
            Some(FieldMap {
                get: |c| (c.mode == LoopMode::ClosedLoop) as u32,
                set: |c, v| c.mode = if v == 1 { LoopMode::ClosedLoop } else { LoopMode::OpenLoop },
            }),
            None, "0 open loop, 1 closed loop"),
        row("COMP_O0", 0x50, 32, Rw, Real, Compensation, real!(compensation.o0), Some(compensation),
            "offset, raw units"),
        row("COMP_O1", 0x51, 32, Rw, Real, Compensation, real!(compensation.o1), Some(compensation),
            "offset, raw units per degC"),
        row("COMP_O2", 0x52, 32, Rw, Real, Compensation, real!(compensation.o2), Some(compensation),
            "offset, raw units per degC^2"),
        row("COMP_G0", 0x53, 32, Rw, Real, Compensation, real!(compensation.g0), Some(compensation),
            "gain, deg/s per raw unit"),
        row("COMP_G1", 0x54, 32, Rw, Real, Compensation, real!(compensation.g1), Some(compensation),
            "gain, per degC"),
        row("COMP_G2", 0x55, 32, Rw, Real, Compensation, real!(compensation.g2), Some(compensation),
            "gain, per degC^2"),
        row("RANGE_CODE", 0x60, 2, Rw, Uint, Output,
            Some(FieldMap {
                get: |c| c.range.code(),
                set: |c, v| c.range = RangeCode::from_code(v).unwrap_or_default(),
            }),
            Some(range_code), "0 +/-75, 1 +/-150, 2 +/-300 deg/s"),
        row("WDT_TIMEOUT_MS", 0x61, 16, Rw, Uint, Output, uint!(u32, watchdog_ms), Some(nonzero),
            "watchdog timeout, ms"),
    ]
}

/// Descriptors in address order with reset values taken from `cfg`.
pub fn descriptors(cfg: &ChainConfig) -> Vec<RegisterDescriptor> {
    let mut out: Vec<RegisterDescriptor> = rows()
        .into_iter()
        .map(|r| RegisterDescriptor {
            name: r.name,
            address: r.address,
            width: r.width,
            access: r.access,
            kind: r.kind,
            group: r.group,
            reset_value: match r.name {
                "TEMPERATURE" => (crate::REFERENCE_TEMP as f32).to_bits(),
                _ => r.map.map_or(0, |m| (m.get)(cfg)),
            },
            description: r.description,
            validator: r.validator,
            map: r.map,
        })
        .collect();
    out.sort_by_key(|d| d.address);
    out
}

/// Chain configuration encoded in a register image.
pub fn decode(regs: &[RegisterDescriptor], values: &[u32]) -> ChainConfig {
    let mut cfg = ChainConfig::default();
    for (d, v) in regs.iter().zip(values) {
        if let Some(m) = d.map {
            (m.set)(&mut cfg, *v);
        }
    }
    cfg
}

/// Register writes that program every field of `group` from `cfg`.
pub fn group_writes(
    regs: &[RegisterDescriptor],
    cfg: &ChainConfig,
    group: Group,
) -> Vec<(&'static str, u32)> {
    regs.iter()
        .filter(|d| d.group == group)
        .filter_map(|d| d.map.map(|m| (d.name, (m.get)(cfg))))
        .collect()
}
