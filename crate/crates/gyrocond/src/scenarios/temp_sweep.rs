//! Null and sensitivity across the operating temperature range, re-locking
//! at every point.

use serde::Serialize;
use serde_json::json;

use gyrocond_core::{Simulation, TapId, REFERENCE_TEMP};

use super::{default_settle, mean_of, not_ready, positive, rows, set_rate, Result, ScenarioError};
use crate::config::ScenarioConfig;
use crate::report::{Bound, MetricsReport, ScenarioOutput};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub temperature: f64,
    pub null_v: f64,
    pub sensitivity_mv_per_dps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn temperatures(t_min: f64, t_max: f64, step: f64) -> Vec<f64> {
    let mut ts = Vec::new();
    let mut k = 0;
    loop {
        let t = t_min + k as f64 * step;
        if t >= t_max - 1e-9 {
            break;
        }
        ts.push(t);
        k += 1;
    }
    ts.push(t_max);
    ts
}

fn point(cfg: &ScenarioConfig, t: f64, compensate: bool) -> Result<SweepPoint> {
    let mut sim_cfg = cfg.sim_config()?;
    sim_cfg.temperature = t;
    if !compensate {
        sim_cfg.chain.compensation = sim_cfg.chain.compensation.frozen_at(REFERENCE_TEMP);
    }
    let rate = positive("rate_dps", cfg.params.rate_dps.unwrap_or(50.0))?;
    let dwell = positive("dwell_s", cfg.params.dwell_s.unwrap_or(0.5))?;
    let settle = positive("settle_s", cfg.params.settle_s.unwrap_or(default_settle(sim_cfg.chain.mode)))?;
    let mut sim = Simulation::new(sim_cfg)?;
    let s = sim.run_startup()?;
    if !s.ready {
        return Err(not_ready(&s));
    }
    let at = |sim: &mut Simulation, r: f64| -> Result<f64> {
        set_rate(sim, r)?;
        sim.run_for(settle)?;
        mean_of(sim, TapId::OutputVolts, dwell)
    };
    let v0 = at(&mut sim, 0.0)?;
    let vp = at(&mut sim, rate)?;
    let vm = at(&mut sim, -rate)?;
    Ok(SweepPoint {
        temperature: t,
        null_v: v0,
        sensitivity_mv_per_dps: (vp - vm) / (2.0 * rate) * 1000.0,
        error: None,
    })
}

pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let t_min = cfg.params.t_min.unwrap_or(-40.0);
    let t_max = cfg.params.t_max.unwrap_or(85.0);
    let step = positive("t_step", cfg.params.t_step.unwrap_or(25.0))?;
    if t_max < t_min {
        return Err(ScenarioError::param("t_max below t_min"));
    }
    let compensate = cfg.params.compensation.unwrap_or(true);

    let mut report = MetricsReport::new("temp_sweep", cfg.seed);
    let mut points = Vec::new();
    for t in temperatures(t_min, t_max, step) {
        match point(cfg, t, compensate) {
            Ok(p) => points.push(p),
            Err(e @ (ScenarioError::NotReady { .. } | ScenarioError::Sim(_))) => {
                report.fail(&format!("ready_at_{t}"));
                points.push(SweepPoint {
                    temperature: t,
                    null_v: f64::NAN,
                    sensitivity_mv_per_dps: f64::NAN,
                    error: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let ok: Vec<&SweepPoint> = points.iter().filter(|p| p.error.is_none()).collect();
    let fold = |f: fn(&SweepPoint) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
        ok.iter().map(|p| f(p)).fold(init, pick)
    };
    let s_min = fold(|p| p.sensitivity_mv_per_dps, f64::INFINITY, f64::min);
    let s_max = fold(|p| p.sensitivity_mv_per_dps, f64::NEG_INFINITY, f64::max);
    let n_min = fold(|p| p.null_v, f64::INFINITY, f64::min);
    let n_max = fold(|p| p.null_v, f64::NEG_INFINITY, f64::max);
    let bound = || Bound::range(4.80, 5.20, rows::OVER_TEMP);
    report.check("sensitivity_min_mv_per_dps", s_min, "mV/(deg/s)", bound());
    report.check("sensitivity_max_mv_per_dps", s_max, "mV/(deg/s)", bound());
    report.info("sensitivity_spread_mv_per_dps", s_max - s_min, "mV/(deg/s)");
    report.info("null_drift_v", n_max - n_min, "V");
    report.info("compensated", compensate as u8 as f64, "bool");
    report.details = json!({ "points": points });
    Ok(ScenarioOutput::new(report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_both_ends() {
        assert_eq!(
            temperatures(-40.0, 85.0, 25.0),
            vec![-40.0, -15.0, 10.0, 35.0, 60.0, 85.0]
        );
        assert_eq!(temperatures(-40.0, 85.0, 50.0), vec![-40.0, 10.0, 60.0, 85.0]);
        assert_eq!(temperatures(25.0, 25.0, 5.0), vec![25.0]);
    }
}
