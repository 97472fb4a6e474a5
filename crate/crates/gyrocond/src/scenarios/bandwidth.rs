//! Rate-sine frequency response and the −3 dB point.

use std::f64::consts::TAU;

use serde_json::json;

use gyrocond_core::{Simulation, TapId};

use super::{build, positive, rows, set_rate, start, Result, ScenarioError};
use crate::analysis::{crossing, db, fit_tone};
use crate::config::ScenarioConfig;
use crate::report::{Bound, MetricsReport, ScenarioOutput};

pub const DEFAULT_FREQS: [f64; 15] = [
    1.0, 5.0, 10.0, 20.0, 30.0, 40.0, 45.0, 50.0, 55.0, 60.0, 70.0, 80.0, 100.0, 150.0, 200.0,
];
const OUTPUT_NYQUIST: f64 = 500.0;

/// Drives `amplitude·sin(2πf·t)` °/s for `seconds`, recording the
/// compensated rate.
fn drive_sine(
    sim: &mut Simulation,
    amplitude: f64,
    freq: f64,
    t0: f64,
    seconds: f64,
    record: bool,
) -> Result<Vec<f64>> {
    let h = record.then(|| sim.probe(TapId::RateCompensated, 1));
    let ticks = (seconds * gyrocond_core::dsp::chain::FS_FAST).round() as u64;
    for _ in 0..ticks {
        let t = sim.time() - t0;
        set_rate(sim, amplitude * (TAU * freq * t).sin())?;
        sim.step()?;
    }
    let out = h.map(|h| sim.drain_probe(h)).unwrap_or_default();
    sim.clear_probes();
    Ok(out)
}

/// Response of the compensated rate to a rate sine at each frequency, dB
/// relative to the stimulus.
pub fn response(cfg: &ScenarioConfig, freqs: &[f64], amplitude: f64) -> Result<Vec<f64>> {
    let mut sim = build(cfg)?;
    start(&mut sim)?;
    let settle = cfg.params.settle_s.unwrap_or(0.25);
    let mut out = Vec::with_capacity(freqs.len());
    for &f in freqs {
        let t0 = sim.time();
        let settle_s = settle.max(2.0 / f);
        drive_sine(&mut sim, amplitude, f, t0, settle_s, false)?;
        let periods = (f * 1.0f64.max(4.0 / f)).ceil();
        let window = periods / f;
        // Output samples are produced at the end of each 1 ms block; the
        // fit only needs the amplitude so the offset does not matter.
        let ys = drive_sine(&mut sim, amplitude, f, t0, window, true)?;
        let fit = fit_tone(&ys, 1000.0, f)?;
        out.push(db(fit.amplitude() / amplitude));
    }
    set_rate(&mut sim, 0.0)?;
    Ok(out)
}

pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let freqs = cfg
        .params
        .freqs_hz
        .clone()
        .unwrap_or_else(|| DEFAULT_FREQS.to_vec());
    if freqs.is_empty() {
        return Err(ScenarioError::param("freqs_hz is empty"));
    }
    if let Some(bad) = freqs.iter().find(|f| !(**f > 0.0 && **f < OUTPUT_NYQUIST)) {
        return Err(ScenarioError::param(format!(
            "frequency {bad} Hz outside (0, {OUTPUT_NYQUIST}) Hz"
        )));
    }
    let mut sorted = freqs.clone();
    sorted.sort_by(f64::total_cmp);
    let amplitude = positive("amplitude_dps", cfg.params.amplitude_dps.unwrap_or(20.0))?;
    let resp = response(cfg, &sorted, amplitude)?;

    let mut report = MetricsReport::new("bandwidth", cfg.seed);
    let f3db = crossing(&sorted, &resp, -3.0).unwrap_or(f64::NAN);
    report.check("f3db_hz", f3db, "Hz", Bound::range(25.0, 75.0, rows::BANDWIDTH));
    report.check(
        "f3db_design_hz",
        f3db,
        "Hz",
        Bound::range(45.0, 55.0, rows::BANDWIDTH_DESIGN),
    );
    if let Some(k) = sorted.iter().position(|f| *f == 1.0) {
        report.info("response_1hz_db", resp[k], "dB");
    }
    report.details = json!({ "freqs_hz": sorted, "response_db": resp });
    Ok(ScenarioOutput::new(report))
}
