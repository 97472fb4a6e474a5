//! Rate staircase over ±range: sensitivity, null and nonlinearity from a
//! least-squares line through the level of each step.
//!
//! The level is the median of the step: the output clamps at the range
//! endpoints, which biases the mean of a noisy full-scale step, while the
//! median commutes with the clamp.

use serde_json::json;

use gyrocond_core::dsp::output::SENSITIVITY;
use gyrocond_core::supervisor::{CaptureRequest, TRACE_CAPACITY};
use gyrocond_core::TapId;

use super::{build, default_settle, positive, record, rows, set_rate, start, Result, ScenarioError};
use crate::analysis::{fit_line, mean, median};
use crate::config::ScenarioConfig;
use crate::report::{Bound, MetricsReport, ScenarioOutput};

pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let chain = cfg.chain_config()?;
    let range = positive(
        "range_dps",
        cfg.params.range_dps.unwrap_or(chain.range.full_scale()),
    )?;
    let n = cfg.params.n_points.unwrap_or(11);
    if n < 2 {
        return Err(ScenarioError::param("n_points must be at least 2"));
    }
    let dwell = positive("dwell_s", cfg.params.dwell_s.unwrap_or(1.0))?;
    let settle = positive("settle_s", cfg.params.settle_s.unwrap_or(default_settle(chain.mode)))?;

    let mut sim = build(cfg)?;
    start(&mut sim)?;
    let total = ((n as f64 * (settle + dwell)) * 1000.0).round() as usize;
    sim.start_capture(CaptureRequest {
        tap: TapId::OutputVolts,
        count: total.clamp(1, TRACE_CAPACITY),
        decimation: 1,
    })?;

    let rates: Vec<f64> = (0..n)
        .map(|k| -range + 2.0 * range * k as f64 / (n - 1) as f64)
        .collect();
    let mut volts = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    for &r in &rates {
        set_rate(&mut sim, r)?;
        sim.run_for(settle)?;
        let step = record(&mut sim, TapId::OutputVolts, dwell, 1)?;
        volts.push(median(&step));
        means.push(mean(&step));
    }
    let fit = fit_line(&rates, &volts)?;
    let span = 2.0 * range * SENSITIVITY;
    let nl = fit.max_abs_residual / span * 100.0;
    let mean_nl = fit_line(&rates, &means)?.max_abs_residual / span * 100.0;

    let mut report = MetricsReport::new("linearity", cfg.seed);
    report.check(
        "sensitivity_mv_per_dps",
        fit.slope * 1000.0,
        "mV/(deg/s)",
        Bound::range(4.95, 5.05, rows::SENSITIVITY),
    );
    report.check("null_v", fit.intercept, "V", Bound::range(2.495, 2.505, rows::NULL));
    report.check(
        "nonlinearity_pct_fs",
        nl,
        "%FS",
        Bound::at_most(0.20, rows::NONLINEARITY),
    );
    report.info("nonlinearity_of_means_pct_fs", mean_nl, "%FS");
    report.info("range_dps", range, "deg/s");
    report.details = json!({ "rates_dps": rates, "output_v": volts, "mean_output_v": means });

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
