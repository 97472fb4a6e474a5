//! Behavioral model of a vibrating-ring gyro and the mixed-signal chain that
//! conditions it.
//!
//! The crate is `no_std` (with `alloc`) and contains everything that advances
//! simulated time: the two-mode resonator, the analog front end, the digital
//! conditioning chain, the scan-chain register file and the supervisor logic.
//! File formats, the command service and the CLI live in the `gyrocond`
//! companion crate.
//!
//! The simulation kernel is [`sim::Simulation`]. It advances the physics at
//! 1 MHz and the conditioning chain at 250 kHz; every tunable is held in the
//! [`regmap::RegisterFile`] and reaches the chain only through it.

#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod afe;
pub mod dsp;
pub mod gyro;
pub mod regmap;
pub mod sim;
pub mod supervisor;
pub mod taps;

pub use afe::{AdcConfig, DacConfig, PgaConfig};
pub use dsp::chain::{ChainConfig, LoopMode};
pub use dsp::compensate::CompensationPoly;
pub use dsp::output::RangeCode;
pub use gyro::{GyroParams, GyroState, RateInput, ResonatorStepper};
pub use regmap::RegisterFile;
pub use sim::{SimConfig, Simulation};
pub use supervisor::{StartupPhase, StatusWord, TraceBuffer};
pub use taps::TapId;

/// Physics rate, Hz.
pub const PHYSICS_RATE: u32 = 1_000_000;
/// Physics tick, seconds.
pub const PHYSICS_DT: f64 = 1e-6;
/// Reference temperature of all drift laws, °C.
pub const REFERENCE_TEMP: f64 = 25.0;
