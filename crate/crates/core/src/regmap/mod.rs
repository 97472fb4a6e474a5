//! Register file behind a single scan chain.
//!
//! Every programmable parameter lives in one addressed, width-annotated
//! register. The registers are concatenated in address order into one chain
//! image, least significant bit of the lowest address first, and reached
//! only through a reduced five-state TAP:
//!
//! ```text
//! RESET --0--> IDLE --1--> CAPTURE --0--> SHIFT --1--> UPDATE --0--> IDLE
//!                             |                          ^  |
//!                             +-----------1--------------+  +--1--> CAPTURE
//! ```
//!
//! CAPTURE loads the chain from the live image. Every step spent in SHIFT
//! moves one bit: `tdo` is the outgoing LSB and `tdi` enters at the MSB
//! end. Entering UPDATE commits the chain to the live image after running
//! every validator against the complete proposed image; read-only fields
//! are never changed by UPDATE.

pub mod layout;
pub mod manifest;

use alloc::collections::VecDeque;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::chain::ChainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    Rw,
    Ro,
}

/// How the bits of a register are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Uint,
    /// IEEE-754 binary32 bit pattern.
    Real,
    Flags,
}

/// Start-up phase that programs a register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Status,
    Control,
    Afe,
    Pll,
    Agc,
    Loop,
    Compensation,
    Output,
}

/// Checks a proposed register value against the whole proposed image.
pub type Validator = fn(u32, &ImageView<'_>) -> Result<(), &'static str>;

/// Link between a register and its [`ChainConfig`] field.
#[derive(Debug, Clone, Copy)]
pub struct FieldMap {
    pub get: fn(&ChainConfig) -> u32,
    pub set: fn(&mut ChainConfig, u32),
}

#[derive(Debug, Clone, Copy)]
pub struct RegisterDescriptor {
    pub name: &'static str,
    pub address: u16,
    pub width: u8,
    pub access: Access,
    pub kind: Kind,
    pub group: Group,
    pub reset_value: u32,
    pub description: &'static str,
    pub validator: Option<Validator>,
    pub map: Option<FieldMap>,
}

impl RegisterDescriptor {
    pub fn mask(&self) -> u32 {
        if self.width >= 32 {
            u32::MAX
        } else {
            (1u32 << self.width) - 1
        }
    }

    pub fn fits(&self, value: u32) -> bool {
        value & !self.mask() == 0
    }
}

/// Read access to a complete register image by name.
pub struct ImageView<'a> {
    regs: &'a [RegisterDescriptor],
    values: &'a [u32],
}

impl ImageView<'_> {
    pub fn get(&self, name: &str) -> u32 {
        self.regs
            .iter()
            .position(|d| d.name == name)
            .map_or(0, |i| self.values[i])
    }

    pub fn real(&self, name: &str) -> f64 {
        f32::from_bits(self.get(name)) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegError {
    #[error("unknown register `{0}`")]
    Unknown(String),
    #[error("register `{0}` is read-only")]
    ReadOnly(&'static str),
    #[error("value {value:#x} does not fit the {width}-bit register `{name}`")]
    Width {
        name: &'static str,
        value: u32,
        width: u8,
    },
    #[error("`{register}` rejected: {reason}")]
    Rejected {
        register: &'static str,
        reason: &'static str,
    },
    #[error("scan chain is not idle")]
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapState {
    Reset,
    Idle,
    Capture,
    Shift,
    Update,
}

/// One chain bit forced to a fixed level at capture and update (test hook).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StuckBit {
    /// Position in the chain image.
    pub bit: usize,
    pub value: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfcheckFailure {
    pub register: String,
    /// Pattern index; `None` for the restoration check.
    pub pattern: Option<usize>,
    pub expected: u32,
    pub read: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfcheckReport {
    pub pass: bool,
    pub patterns: usize,
    pub failures: Vec<SelfcheckFailure>,
}

impl SelfcheckReport {
    /// Distinct names of the failing registers, in chain order of first
    /// appearance.
    pub fn failed_registers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in &self.failures {
            if !out.contains(&f.register) {
                out.push(f.register.clone());
            }
        }
        out
    }
}

/// Number of random patterns applied by [`RegisterFile::selfcheck`].
pub const SELFCHECK_RANDOM_PATTERNS: usize = 64;

#[derive(Debug, Clone)]
pub struct RegisterFile {
    regs: Vec<RegisterDescriptor>,
    offsets: Vec<usize>,
    len: usize,
    live: Vec<u32>,
    chain: VecDeque<bool>,
    state: TapState,
    config_fault: bool,
    last_reject: Option<(&'static str, &'static str)>,
    generation: u64,
    stuck: Option<StuckBit>,
    bypass_validators: bool,
}

impl Default for RegisterFile {
    fn default() -> Self {
        Self::new(&ChainConfig::default())
    }
}

impl RegisterFile {
    /// Register file whose reset values encode `cfg`.
    pub fn new(cfg: &ChainConfig) -> Self {
        Self::from_descriptors(layout::descriptors(cfg))
    }

    pub fn from_descriptors(regs: Vec<RegisterDescriptor>) -> Self {
        let mut offsets = Vec::with_capacity(regs.len());
        let mut len = 0;
        for d in &regs {
            assert!((1..=32).contains(&d.width), "{}: width", d.name);
            assert!(d.fits(d.reset_value), "{}: reset value", d.name);
            offsets.push(len);
            len += d.width as usize;
        }
        for w in regs.windows(2) {
            assert!(w[0].address < w[1].address, "addresses must ascend");
        }
        let live = regs.iter().map(|d| d.reset_value).collect();
        Self {
            regs,
            offsets,
            len,
            live,
            chain: VecDeque::with_capacity(len),
            state: TapState::Reset,
            config_fault: false,
            last_reject: None,
            generation: 0,
            stuck: None,
            bypass_validators: false,
        }
    }

    pub fn descriptors(&self) -> &[RegisterDescriptor] {
        &self.regs
    }

    /// Chain image length, bits.
    pub fn image_len(&self) -> usize {
        self.len
    }

    pub fn index_of(&self, name: &str) -> Result<usize, RegError> {
        self.regs
            .iter()
            .position(|d| d.name == name)
            .ok_or_else(|| RegError::Unknown(name.to_string()))
    }

    pub fn descriptor(&self, name: &str) -> Result<&RegisterDescriptor, RegError> {
        Ok(&self.regs[self.index_of(name)?])
    }

    /// Position of `bit` of register `name` in the chain image.
    pub fn bit_position(&self, name: &str, bit: usize) -> Result<usize, RegError> {
        let i = self.index_of(name)?;
        assert!(bit < self.regs[i].width as usize);
        Ok(self.offsets[i] + bit)
    }

    /// Increments on every UPDATE that changed a live value.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn config_fault(&self) -> bool {
        self.config_fault
    }

    /// Last validator rejection: register name and reason.
    pub fn last_rejection(&self) -> Option<(&'static str, &'static str)> {
        self.last_reject
    }

    pub fn state(&self) -> TapState {
        self.state
    }

    /// Asynchronous reset: TAP to RESET, live image to reset values, fault
    /// cleared.
    pub fn reset(&mut self) {
        self.state = TapState::Reset;
        self.chain.clear();
        for (v, d) in self.live.iter_mut().zip(&self.regs) {
            *v = d.reset_value;
        }
        self.config_fault = false;
        self.last_reject = None;
        self.generation += 1;
    }

    pub fn inject_stuck_bit(&mut self, stuck: Option<StuckBit>) {
        self.stuck = stuck;
    }

    // Hardware side: what the chain logic sees, not a user access path.

    /// Live value as seen by the hardware.
    pub fn live(&self, name: &str) -> u32 {
        self.index_of(name).map_or(0, |i| self.live[i])
    }

    pub fn live_values(&self) -> &[u32] {
        &self.live
    }

    pub fn live_view(&self) -> ImageView<'_> {
        ImageView {
            regs: &self.regs,
            values: &self.live,
        }
    }

    /// Chain configuration held in the live image.
    pub fn live_config(&self) -> ChainConfig {
        layout::decode(&self.regs, &self.live)
    }

    /// Hardware update of a read-only status field.
    pub fn set_status(&mut self, name: &str, value: u32) {
        if let Ok(i) = self.index_of(name) {
            debug_assert_eq!(self.regs[i].access, Access::Ro);
            self.live[i] = value & self.regs[i].mask();
        }
    }

    // TAP.

    /// Level on TDO: the chain LSB while capturing or shifting.
    pub fn tdo(&self) -> bool {
        match self.state {
            TapState::Capture | TapState::Shift => self.chain.front().copied().unwrap_or(false),
            _ => false,
        }
    }

    /// One TCK edge. Returns the bit shifted out (false outside SHIFT).
    pub fn tap_step(&mut self, tms: bool, tdi: bool) -> bool {
        match self.state {
            TapState::Reset => {
                if !tms {
                    self.state = TapState::Idle;
                }
                false
            }
            TapState::Idle => {
                if tms {
                    self.capture();
                    self.state = TapState::Capture;
                }
                false
            }
            TapState::Capture => {
                if tms {
                    self.commit();
                    self.state = TapState::Update;
                } else {
                    self.state = TapState::Shift;
                }
                false
            }
            TapState::Shift => {
                let out = self.chain.pop_front().unwrap_or(false);
                self.chain.push_back(tdi);
                if tms {
                    self.commit();
                    self.state = TapState::Update;
                }
                out
            }
            TapState::Update => {
                if tms {
                    self.capture();
                    self.state = TapState::Capture;
                } else {
                    self.state = TapState::Idle;
                }
                false
            }
        }
    }

    fn capture(&mut self) {
        self.chain.clear();
        for (i, d) in self.regs.iter().enumerate() {
            let v = self.live[i];
            for b in 0..d.width {
                self.chain.push_back(v >> b & 1 == 1);
            }
        }
        if let Some(s) = self.stuck {
            if let Some(bit) = self.chain.get_mut(s.bit) {
                *bit = s.value;
            }
        }
    }

    fn commit(&mut self) {
        let mut proposed = self.live.clone();
        let mut pos = 0;
        for (i, d) in self.regs.iter().enumerate() {
            let mut v = 0u32;
            for b in 0..d.width as usize {
                let mut bit = self.chain.get(pos + b).copied().unwrap_or(false);
                if let Some(s) = self.stuck {
                    if s.bit == pos + b {
                        bit = s.value;
                    }
                }
                v |= (bit as u32) << b;
            }
            pos += d.width as usize;
            if d.access == Access::Rw {
                proposed[i] = v;
            }
        }
        if !self.bypass_validators {
            let view = ImageView {
                regs: &self.regs,
                values: &proposed,
            };
            for (i, d) in self.regs.iter().enumerate() {
                if let Some(check) = d.validator {
                    if let Err(reason) = check(proposed[i], &view) {
                        self.config_fault = true;
                        self.last_reject = Some((d.name, reason));
                        return;
                    }
                }
            }
        }
        self.last_reject = None;
        if proposed != self.live {
            self.live = proposed;
            self.generation += 1;
        }
    }

    /// Full CAPTURE/SHIFT/UPDATE transaction. `next` chooses each `tdi` bit
    /// from its position and the current `tdo`. Returns the shifted-out
    /// image.
    fn transact(&mut self, mut next: impl FnMut(usize, bool) -> bool) -> Result<Vec<bool>, RegError> {
        match self.state {
            TapState::Reset => {
                self.tap_step(false, false);
            }
            TapState::Idle => {}
            _ => return Err(RegError::Busy),
        }
        self.tap_step(true, false);
        self.tap_step(false, false);
        let mut out = Vec::with_capacity(self.len);
        for j in 0..self.len {
            let tdi = next(j, self.tdo());
            out.push(self.tap_step(j + 1 == self.len, tdi));
        }
        self.tap_step(false, false);
        Ok(out)
    }

    fn unpack(&self, bits: &[bool]) -> Vec<u32> {
        self.regs
            .iter()
            .zip(&self.offsets)
            .map(|(d, &o)| {
                (0..d.width as usize).fold(0u32, |v, b| v | (bits[o + b] as u32) << b)
            })
            .collect()
    }

    /// Reads the whole image through the chain (read-modify-write identity).
    pub fn read_all(&mut self) -> Result<Vec<u32>, RegError> {
        let bits = self.transact(|_, tdo| tdo)?;
        Ok(self.unpack(&bits))
    }

    pub fn read_register(&mut self, name: &str) -> Result<u32, RegError> {
        let i = self.index_of(name)?;
        Ok(self.read_all()?[i])
    }

    pub fn read_real(&mut self, name: &str) -> Result<f64, RegError> {
        Ok(f32::from_bits(self.read_register(name)?) as f64)
    }

    /// Writes several registers in one transaction; either all land or none.
    pub fn write_registers(&mut self, writes: &[(&str, u32)]) -> Result<(), RegError> {
        let mut field: Vec<Option<u32>> = vec![None; self.regs.len()];
        for (name, value) in writes {
            let i = self.index_of(name)?;
            let d = &self.regs[i];
            if d.access == Access::Ro {
                return Err(RegError::ReadOnly(d.name));
            }
            if !d.fits(*value) {
                return Err(RegError::Width {
                    name: d.name,
                    value: *value,
                    width: d.width,
                });
            }
            field[i] = Some(*value);
        }
        let mut owner = Vec::with_capacity(self.len);
        for (i, d) in self.regs.iter().enumerate() {
            for b in 0..d.width {
                owner.push((i, b));
            }
        }
        self.transact(|j, tdo| {
            let (i, b) = owner[j];
            match field[i] {
                Some(v) => v >> b & 1 == 1,
                None => tdo,
            }
        })?;
        match self.last_reject {
            Some((register, reason)) if !self.bypass_validators => {
                Err(RegError::Rejected { register, reason })
            }
            _ => Ok(()),
        }
    }

    pub fn write_register(&mut self, name: &str, value: u32) -> Result<(), RegError> {
        self.write_registers(&[(name, value)])
    }

    pub fn write_real(&mut self, name: &str, value: f64) -> Result<(), RegError> {
        self.write_register(name, (value as f32).to_bits())
    }

    /// Walking ones and seeded random patterns through every RW register,
    /// each read back and compared; RO registers must not move. Validators
    /// are suspended while patterns are applied and the original image is
    /// restored at the end.
    pub fn selfcheck(&mut self, seed: u64) -> Result<SelfcheckReport, RegError> {
        let original = self.read_all()?;
        let rw: Vec<usize> = (0..self.regs.len())
            .filter(|&i| self.regs[i].access == Access::Rw)
            .collect();
        let mut patterns: Vec<Vec<u32>> = Vec::new();
        for b in 0..32u32 {
            patterns.push(
                rw.iter()
                    .map(|&i| 1u32 << (b % self.regs[i].width as u32))
                    .collect(),
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..SELFCHECK_RANDOM_PATTERNS {
            patterns.push(rw.iter().map(|&i| rng.next_u32() & self.regs[i].mask()).collect());
        }

        let mut failures = Vec::new();
        self.bypass_validators = true;
        let result = (|| {
            for (p, values) in patterns.iter().enumerate() {
                let writes: Vec<(&str, u32)> = rw
                    .iter()
                    .zip(values)
                    .map(|(&i, &v)| (self.regs[i].name, v))
                    .collect();
                self.write_registers(&writes)?;
                let back = self.read_all()?;
                for (i, d) in self.regs.iter().enumerate() {
                    let expected = match rw.iter().position(|&r| r == i) {
                        Some(k) => values[k],
                        None => original[i],
                    };
                    if back[i] != expected {
                        failures.push(SelfcheckFailure {
                            register: d.name.to_string(),
                            pattern: Some(p),
                            expected,
                            read: back[i],
                        });
                    }
                }
            }
            let restore: Vec<(&str, u32)> =
                rw.iter().map(|&i| (self.regs[i].name, original[i])).collect();
            self.write_registers(&restore)
        })();
        self.bypass_validators = false;
        result?;
        let after = self.read_all()?;
        for (i, d) in self.regs.iter().enumerate() {
            if after[i] != original[i] {
                failures.push(SelfcheckFailure {
                    register: d.name.to_string(),
                    pattern: None,
                    expected: original[i],
                    read: after[i],
                });
            }
        }
        Ok(SelfcheckReport {
            pass: failures.is_empty(),
            patterns: patterns.len(),
            failures,
        })
    }

    pub fn manifest(&self) -> Vec<manifest::ManifestEntry> {
        self.regs.iter().map(manifest::ManifestEntry::from).collect()
    }
}
