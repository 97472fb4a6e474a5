//! Characterization scenarios. Each builds an isolated simulation from a
//! [`ScenarioConfig`], drives it and reports metrics against their bounds.

mod bandwidth;
mod calibrate;
mod linearity;
mod lock;
mod noise;
mod stimulus;
mod suppression;
mod temp_sweep;

pub use calibrate::{CalibrationArtifact, CalibrationPoint, NoiseStep};

use thiserror::Error;

use gyrocond_core::gyro::RateInput;
use gyrocond_core::sim::SimError;
use gyrocond_core::{LoopMode, Simulation, StartupPhase, StatusWord, TapId};

use crate::analysis::AnalysisError;
use crate::config::{ConfigError, ScenarioConfig, ScenarioKind};
use crate::report::ScenarioOutput;

/// Characterization rows the metrics are checked against.
pub mod rows {
    pub const TURN_ON: &str = "Turn On Time: max 500 ms";
    pub const SENSITIVITY: &str = "Sensitivity: 5.00 mV/deg/s";
    pub const NULL: &str = "Null: typ 2.50 V";
    pub const NONLINEARITY: &str = "Non Linearity: max 0.20 %FS";
    pub const NOISE: &str = "Rate Noise Dens.: 0.04 .. 0.13 deg/s/rtHz";
    pub const BANDWIDTH: &str = "3 dB Bandwidth: 25 .. 75 Hz";
    pub const BANDWIDTH_DESIGN: &str = "3 dB Bandwidth design point: 50 +/- 5 Hz";
    pub const OVER_TEMP: &str = "Sensitivity over temperature: 4.80 .. 5.20 mV/deg/s";
    pub const LOCK_ACCURACY: &str = "PLL lock accuracy: 100 ppm";
    pub const SUPPRESSION: &str = "Closed-loop secondary suppression: 40 dB";
    pub const AGREEMENT: &str = "Open/closed readout agreement: 1 %";
    pub const TRIM: &str = "Calibrated reading at +50 deg/s: 50.0 +/- 0.1 deg/s";
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("chain not ready: start-up ended in {phase} (fault phase {fault})")]
    NotReady { phase: String, fault: String },
    #[error("{0}")]
    Param(String),
}

impl ScenarioError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        ScenarioError::Param(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

/// Runs the scenario named in `cfg`.
pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    match cfg.scenario {
        ScenarioKind::Lock => lock::run(cfg),
        ScenarioKind::Linearity => linearity::run(cfg),
        ScenarioKind::Noise => noise::run(cfg),
        ScenarioKind::Bandwidth => bandwidth::run(cfg),
        ScenarioKind::TempSweep => temp_sweep::run(cfg),
        ScenarioKind::Suppression => suppression::run(cfg),
        ScenarioKind::Calibrate => calibrate::run(cfg),
        ScenarioKind::Stimulus => stimulus::run(cfg),
    }
}

pub(crate) fn build(cfg: &ScenarioConfig) -> Result<Simulation> {
    Ok(Simulation::new(cfg.sim_config()?)?)
}

/// Runs start-up and requires the ready state.
pub(crate) fn start(sim: &mut Simulation) -> Result<StatusWord> {
    let s = sim.run_startup()?;
    if !s.ready {
        return Err(not_ready(&s));
    }
    Ok(s)
}

pub(crate) fn not_ready(s: &StatusWord) -> ScenarioError {
    ScenarioError::NotReady {
        phase: s.phase.name().to_string(),
        fault: s.fault_phase.map_or("none", StartupPhase::name).to_string(),
    }
}

pub(crate) fn set_rate(sim: &mut Simulation, dps: f64) -> Result<()> {
    Ok(sim.set_rate(RateInput::DegPerSec(dps))?)
}

/// Records `tap` for `seconds` at its native rate divided by `decimation`.
pub(crate) fn record(
    sim: &mut Simulation,
    tap: TapId,
    seconds: f64,
    decimation: u32,
) -> Result<Vec<f64>> {
    let h = sim.probe(tap, decimation);
    sim.run_for(seconds)?;
    let out = sim.drain_probe(h);
    sim.clear_probes();
    Ok(out)
}

pub(crate) fn mean_of(sim: &mut Simulation, tap: TapId, seconds: f64) -> Result<f64> {
    Ok(crate::analysis::mean(&record(sim, tap, seconds, 1)?))
}

/// Time to wait after a rate change. Open loop rings down with the
/// secondary mode time constant 2Q/ω (~0.1 s).
pub(crate) fn default_settle(mode: LoopMode) -> f64 {
    match mode {
        LoopMode::OpenLoop => 1.5,
        LoopMode::ClosedLoop => 0.3,
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ScenarioError::param(format!("{name} must be positive, got {v}")))
    }
}
