//! Paired open/closed-loop runs at a constant rate: coherent secondary
//! displacement and agreement of the calibrated rate readouts.

use serde_json::json;

use gyrocond_core::dsp::chain::LoopMode;
use gyrocond_core::{Simulation, TapId};

use super::{build, positive, rows, set_rate, start, Result};
use crate::analysis::{db, fit_tone, mean};
use crate::config::ScenarioConfig;
use crate::report::{Bound, MetricsReport, ScenarioOutput};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopMeasurement {
    /// Coherent secondary displacement amplitude at the drive frequency, m.
    pub x2_amplitude: f64,
    /// Mean compensated rate, °/s.
    pub rate: f64,
}

/// Coherent amplitude of `tap` (a physics-rate tap) at the NCO frequency,
/// together with the mean compensated rate, over `window` seconds.
pub fn measure_loop(sim: &mut Simulation, window: f64) -> Result<LoopMeasurement> {
    let hx = sim.probe(TapId::X2, 1);
    let hf = sim.probe(TapId::NcoFw, 1);
    let hr = sim.probe(TapId::RateCompensated, 1);
    sim.run_for(window)?;
    let x2 = sim.drain_probe(hx);
    let nco = mean(&sim.drain_probe(hf));
    let rate = mean(&sim.drain_probe(hr));
    sim.clear_probes();
    let fit = fit_tone(&x2, TapId::X2.rate().hz(), nco)?;
    Ok(LoopMeasurement {
        x2_amplitude: fit.amplitude(),
        rate,
    })
}

pub fn run_mode(cfg: &ScenarioConfig, mode: LoopMode, rate: f64) -> Result<LoopMeasurement> {
    let mut c = cfg.clone();
    c.chain.insert("mode".into(), serde_json::to_value(mode).expect("mode serializes"));
    let mut sim = build(&c)?;
    start(&mut sim)?;
    set_rate(&mut sim, rate)?;
    // Open loop settles with the mode time constant 2Q/ω (~0.1 s).
    let settle = match mode {
        LoopMode::OpenLoop => 1.5,
        LoopMode::ClosedLoop => 0.5,
    };
    sim.run_for(cfg.params.settle_s.unwrap_or(settle))?;
    measure_loop(&mut sim, cfg.params.dwell_s.unwrap_or(0.5))
}

pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let rate = positive("rate_dps", cfg.params.rate_dps.unwrap_or(50.0))?;
    let open = run_mode(cfg, LoopMode::OpenLoop, rate)?;
    let closed = run_mode(cfg, LoopMode::ClosedLoop, rate)?;

    let mut report = MetricsReport::new("suppression", cfg.seed);
    report.info("x2_open_m", open.x2_amplitude, "m");
    report.info("x2_closed_m", closed.x2_amplitude, "m");
    report.check(
        "suppression_db",
        db(open.x2_amplitude / closed.x2_amplitude),
        "dB",
        Bound::at_least(40.0, rows::SUPPRESSION),
    );
    report.info("rate_open_dps", open.rate, "deg/s");
    report.info("rate_closed_dps", closed.rate, "deg/s");
    report.check(
        "readout_agreement_pct",
        ((closed.rate - open.rate) / open.rate).abs() * 100.0,
        "%",
        Bound::at_most(1.0, rows::AGREEMENT),
    );
    report.details = json!({ "rate_dps": rate });
    Ok(ScenarioOutput::new(report))
}
