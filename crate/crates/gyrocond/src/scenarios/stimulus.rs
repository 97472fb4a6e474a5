//! Free-form run: applies the configured stimulus after start-up and
//! records the output.

use gyrocond_core::dsp::chain::FS_FAST;
use gyrocond_core::gyro::RateInput;
use gyrocond_core::supervisor::{CaptureRequest, TRACE_CAPACITY};
use gyrocond_core::TapId;

use super::{build, positive, start, Result};
use crate::analysis::{mean, rms};
use crate::config::{ScenarioConfig, Stimulus};
use crate::report::{MetricsReport, ScenarioOutput};

pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let stimulus = cfg
        .stimulus
        .clone()
        .unwrap_or(Stimulus::ConstantRate { dps: 0.0 });
    let duration = positive(
        "duration_s",
        cfg.duration_s
            .or(stimulus.natural_duration())
            .unwrap_or(1.0),
    )?;
    let mut sim = build(cfg)?;
    start(&mut sim)?;
    let count = ((duration * 1000.0).round() as usize).clamp(1, TRACE_CAPACITY);
    sim.start_capture(CaptureRequest {
        tap: TapId::OutputVolts,
        count,
        decimation: 1,
    })?;
    let h = sim.probe(TapId::RateCompensated, 1);
    let t0 = sim.time();
    let ticks = (duration * FS_FAST).round() as u64;
    let base_temp = cfg.temperature;
    for _ in 0..ticks {
        let t = sim.time() - t0;
        let rate = RateInput::DegPerSec(stimulus.rate_at(t));
        match stimulus.temperature_at(t) {
            Some(temp) => sim.set_environment(rate, temp)?,
            None => sim.set_rate(rate)?,
        }
        sim.step()?;
    }
    let rates = sim.drain_probe(h);

    let mut report = MetricsReport::new("stimulus", cfg.seed);
    report.info("duration_s", duration, "s");
    report.info("rate_mean_dps", mean(&rates), "deg/s");
    report.info("rate_rms_dps", rms(&rates), "deg/s");
    report.info("start_temperature_c", base_temp, "degC");
    let mut out = ScenarioOutput::new(report);
    loop {
        if let Some(t) = sim.take_capture() {
            out.traces.push(t);
            break;
        }
        sim.step()?;
    }
    Ok(out)
}
