//! Zero-rate noise: Welch PSD of the compensated rate, mean amplitude
//! density over 1–20 Hz.

use gyrocond_core::supervisor::TRACE_CAPACITY;
use gyrocond_core::{TapId, TraceBuffer};

use super::{build, positive, record, rows, start, Result, ScenarioError};
use crate::analysis::{mean, rms, welch_psd};
use crate::config::ScenarioConfig;
use crate::report::{Bound, MetricsReport, ScenarioOutput};

pub const MIN_DURATION_S: f64 = 5.0;
pub const BAND_HZ: (f64, f64) = (1.0, 20.0);
const SETTLE_S: f64 = 0.5;

/// Result of one noise run.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMeasurement {
    pub density: f64,
    pub mean: f64,
    pub rms: f64,
    pub samples: Vec<f64>,
}

/// Measures the zero-rate density of `cfg` for `duration` seconds.
pub fn measure(cfg: &ScenarioConfig, duration: f64, segment_len: usize) -> Result<NoiseMeasurement> {
    let mut sim = build(cfg)?;
    start(&mut sim)?;
    sim.run_for(cfg.params.settle_s.unwrap_or(SETTLE_S))?;
    let samples = record(&mut sim, TapId::RateCompensated, duration, 1)?;
    let psd = welch_psd(&samples, 1000.0, segment_len, 0.5)?;
    Ok(NoiseMeasurement {
        density: psd.mean_amplitude_density(BAND_HZ.0, BAND_HZ.1),
        mean: mean(&samples),
        rms: rms(&samples),
        samples,
    })
}

pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let duration = positive("duration_s", cfg.duration_s.unwrap_or(20.0))?;
    if duration < MIN_DURATION_S {
        return Err(ScenarioError::param(format!(
            "duration_s {duration} is below the {MIN_DURATION_S} s needed for averaging"
        )));
    }
    let segment_len = cfg.params.segment_len.unwrap_or(1024);
    let m = measure(cfg, duration, segment_len)?;

    let mut report = MetricsReport::new("noise", cfg.seed);
    report.check(
        "rate_noise_density_dps_rthz",
        m.density,
        "deg/s/rtHz",
        Bound::range(0.04, 0.13, rows::NOISE),
    );
    report.info("rate_mean_dps", m.mean, "deg/s");
    report.info("rate_rms_dps", m.rms, "deg/s");
    report.info("duration_s", duration, "s");

    // The trace holds the first capture-sized window of the analysed run.
    let chain = cfg.chain_config()?;
    let tap = TapId::RateCompensated;
    let n = m.samples.len().min(TRACE_CAPACITY);
    let mut out = ScenarioOutput::new(report);
    out.traces.push(TraceBuffer::encode(
        tap,
        tap.rate().hz(),
        tap.encoding(&chain.adc(), chain.nco_nominal_hz),
        1,
        n,
        &m.samples[..n],
    ));
    Ok(out)
}
