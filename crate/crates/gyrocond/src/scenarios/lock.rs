//! Start-up transient: lock, settle and turn-on times, locked frequency.

use serde_json::json;

use gyrocond_core::supervisor::{CaptureRequest, PHASE_TIMEOUT_MS};
use gyrocond_core::TapId;

use super::{build, record, rows, Result};
use crate::analysis::mean;
use crate::config::ScenarioConfig;
use crate::report::{Bound, MetricsReport, ScenarioOutput};

const TRACE_DECIMATION: u32 = 25;
const TRACE_LEN: usize = 5000;
/// Window over which the locked NCO frequency is averaged, s.
const FREQ_WINDOW_S: f64 = 0.2;

pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let mut sim = build(cfg)?;
    let mut report = MetricsReport::new("lock", cfg.seed);
    sim.start_capture(CaptureRequest {
        tap: TapId::NcoFw,
        count: TRACE_LEN,
        decimation: TRACE_DECIMATION,
    })?;

    let (mut lock_ms, mut settle_ms) = (None, None);
    let limit_ms = 6 * PHASE_TIMEOUT_MS as u64;
    let status = loop {
        sim.run_ticks(gyrocond_core::sim::TICKS_PER_MS)?;
        let s = sim.status();
        let now = sim.time_ms();
        if s.pll_locked && lock_ms.is_none() {
            lock_ms = Some(now);
        }
        if s.agc_settled && settle_ms.is_none() {
            settle_ms = Some(now);
        }
        if s.ready || s.fault_phase.is_some() || s.watchdog_expired || now >= limit_ms {
            break s;
        }
    };
    let ms = |v: Option<u64>| v.map_or(f64::NAN, |v| v as f64);
    report.info("lock_time_ms", ms(lock_ms), "ms");
    report.info("settle_time_ms", ms(settle_ms), "ms");

    if !status.ready {
        report.fail("ready");
        report.details = json!({
            "phase": status.phase.name(),
            "fault_phase": status.fault_phase.map(|p| p.name()),
        });
    } else {
        let turn_on = status.turn_on_time_ms.map_or(f64::NAN, |t| t as f64);
        report.check("turn_on_time_ms", turn_on, "ms", Bound::at_most(500.0, rows::TURN_ON));
        let nco = mean(&record(&mut sim, TapId::NcoFw, FREQ_WINDOW_S, 1)?);
        let p = sim.gyro().params;
        let resonance = p.drifted_freq(p.f1, sim.gyro().state.temp);
        let ppm = (nco - resonance) / resonance * 1e6;
        report.info("locked_frequency_hz", nco, "Hz");
        report.info("resonance_hz", resonance, "Hz");
        report.check(
            "freq_error_ppm",
            ppm.abs(),
            "ppm",
            Bound::at_most(100.0, rows::LOCK_ACCURACY),
        );
    }

    let mut out = ScenarioOutput::new(report);
    if status.ready {
        loop {
            if let Some(t) = sim.take_capture() {
                out.traces.push(t);
                break;
            }
            sim.step()?;
        }
    }
    Ok(out)
}
