//! Digital conditioning chain.

pub mod agc;
pub mod chain;
pub mod compensate;
pub mod decimate;
pub mod demod;
pub mod filters;
pub mod nco;
pub mod output;
pub mod pi;
pub mod pll;
pub mod rebalance;

pub use nco::NcoState;
pub use pi::PiController;
