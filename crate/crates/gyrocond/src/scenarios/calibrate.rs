//! Trim procedure: noise-parameter bisection and the two-point,
//! three-temperature compensation fit for both loop modes.
//!
//! The solved values are written as `calibration.json`; the defaults of the
//! model and chain carry the same numbers.

use serde::{Deserialize, Serialize};
use serde_json::json;

use gyrocond_core::dsp::chain::LoopMode;
use gyrocond_core::{CompensationPoly, Simulation, TapId};

use super::noise::{measure, BAND_HZ};
use super::{default_settle, mean_of, not_ready, positive, rows, set_rate, Result, ScenarioError};
use crate::analysis::fit_quadratic;
use crate::config::ScenarioConfig;
use crate::report::{Bound, MetricsReport, ScenarioOutput};

pub const DEFAULT_TEMPERATURES: [f64; 3] = [-40.0, 25.0, 85.0];
pub const DEFAULT_NOISE_TARGET: f64 = 0.09;
const CAL_RATE_DPS: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStep {
    pub pickoff_noise: f64,
    pub density: f64,
}

/// Two-point result at one temperature, in raw chain units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub temperature: f64,
    pub raw_plus: f64,
    pub raw_minus: f64,
    pub offset: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCalibration {
    pub points: Vec<CalibrationPoint>,
    pub poly: CompensationPoly,
    /// Reading at +50 °/s and 25 °C with the solved trim, °/s.
    pub check_reading_dps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    pub target: f64,
    pub band_hz: (f64, f64),
    pub duration_s: f64,
    pub pickoff_noise: f64,
    pub density: f64,
    pub steps: Vec<NoiseStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub seed: u64,
    pub calibration_rate_dps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseCalibration>,
    pub closed_loop: ModeCalibration,
    pub open_loop: ModeCalibration,
}

fn mode_config(cfg: &ScenarioConfig, mode: LoopMode, noise: f64) -> Result<gyrocond_core::SimConfig> {
    let mut c = cfg.sim_config()?;
    c.chain.mode = mode;
    c.gyro.pickoff_noise = noise;
    Ok(c)
}

/// Mean of `tap` at `+rate` and `−rate` after start-up at `temp`.
fn two_point(
    cfg: &ScenarioConfig,
    mode: LoopMode,
    noise: f64,
    poly: CompensationPoly,
    temp: f64,
    tap: TapId,
) -> Result<(f64, f64)> {
    let mut c = mode_config(cfg, mode, noise)?;
    c.chain.compensation = poly;
    c.temperature = temp;
    let mut sim = Simulation::new(c)?;
    let s = sim.run_startup()?;
    if !s.ready {
        return Err(not_ready(&s));
    }
    let dwell = cfg.params.dwell_s.unwrap_or(0.5);
    let mut at = |r: f64| -> Result<f64> {
        set_rate(&mut sim, r)?;
        sim.run_for(default_settle(mode))?;
        mean_of(&mut sim, tap, dwell)
    };
    let p = at(CAL_RATE_DPS)?;
    let m = at(-CAL_RATE_DPS)?;
    Ok((p, m))
}

fn calibrate_mode(cfg: &ScenarioConfig, mode: LoopMode, noise: f64) -> Result<ModeCalibration> {
    let temps = cfg
        .params
        .temperatures
        .clone()
        .unwrap_or_else(|| DEFAULT_TEMPERATURES.to_vec());
    if temps.len() < 3 {
        return Err(ScenarioError::param("need at least three calibration temperatures"));
    }
    let mut points = Vec::new();
    for &t in &temps {
        let (p, m) = two_point(
            cfg,
            mode,
            noise,
            CompensationPoly::identity(),
            t,
            TapId::RateFiltered,
        )?;
        let slope = (p - m) / (2.0 * CAL_RATE_DPS);
        points.push(CalibrationPoint {
            temperature: t,
            raw_plus: p,
            raw_minus: m,
            offset: 0.5 * (p + m),
            gain: 1.0 / slope,
        });
    }
    let ts: Vec<f64> = points.iter().map(|p| p.temperature).collect();
    let os: Vec<f64> = points.iter().map(|p| p.offset).collect();
    let gs: Vec<f64> = points.iter().map(|p| p.gain).collect();
    let [o0, o1, o2] = fit_quadratic(&ts, &os)?;
    let [g0, g1, g2] = fit_quadratic(&ts, &gs)?;
    // The chain holds the trim in single precision.
    let f = |v: f64| v as f32 as f64;
    let poly = CompensationPoly {
        o0: f(o0),
        o1: f(o1),
        o2: f(o2),
        g0: f(g0),
        g1: f(g1),
        g2: f(g2),
    };
    poly.validate()
        .map_err(|e| ScenarioError::param(format!("solved trim invalid: {e}")))?;
    let (check, _) = two_point(
        cfg,
        mode,
        noise,
        poly,
        gyrocond_core::REFERENCE_TEMP,
        TapId::RateCompensated,
    )?;
    Ok(ModeCalibration {
        points,
        poly,
        check_reading_dps: check,
    })
}

/// Bisects `pickoff_noise` on a log scale so the closed-loop density hits
/// `target`. Density grows monotonically with the noise parameter.
fn calibrate_noise(
    cfg: &ScenarioConfig,
    poly: CompensationPoly,
    target: f64,
    duration: f64,
    iterations: usize,
) -> Result<NoiseCalibration> {
    let start = cfg.gyro_params()?.pickoff_noise;
    let density_at = |noise: f64| -> Result<f64> {
        let mut c = cfg.clone();
        c.gyro.insert("pickoff_noise".into(), json!(noise));
        c.chain.insert("mode".into(), json!("closed_loop"));
        c.chain
            .insert("compensation".into(), serde_json::to_value(poly).expect("poly serializes"));
        Ok(measure(&c, duration, 1024)?.density)
    };
    let mut steps = Vec::new();
    let (mut lo, mut hi) = (start / 4.0, start * 4.0);
    for (bound, below) in [(&mut lo, true), (&mut hi, false)] {
        // Widen until the bracket holds the target.
        for _ in 0..8 {
            let d = density_at(*bound)?;
            steps.push(NoiseStep {
                pickoff_noise: *bound,
                density: d,
            });
            if (d < target) == below {
                break;
            }
            *bound = if below { *bound / 4.0 } else { *bound * 4.0 };
        }
    }
    let mut best = (start, f64::NAN);
    for _ in 0..iterations {
        let mid = (lo * hi).sqrt();
        let d = density_at(mid)?;
        steps.push(NoiseStep {
            pickoff_noise: mid,
            density: d,
        });
        best = (mid, d);
        if d < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(NoiseCalibration {
        target,
        band_hz: BAND_HZ,
        duration_s: duration,
        pickoff_noise: best.0,
        density: best.1,
        steps,
    })
}

pub fn calibrate(cfg: &ScenarioConfig) -> Result<CalibrationArtifact> {
    let mut noise_param = cfg.gyro_params()?.pickoff_noise;
    let mut noise = None;
    if cfg.params.calibrate_noise.unwrap_or(true) {
        let first = calibrate_mode(cfg, LoopMode::ClosedLoop, noise_param)?;
        let target = positive(
            "noise_target",
            cfg.params.noise_target.unwrap_or(DEFAULT_NOISE_TARGET),
        )?;
        let duration = cfg.duration_s.unwrap_or(20.0);
        let iterations = cfg.params.noise_iterations.unwrap_or(12);
        let n = calibrate_noise(cfg, first.poly, target, duration, iterations)?;
        noise_param = n.pickoff_noise;
        noise = Some(n);
    }
    let closed_loop = calibrate_mode(cfg, LoopMode::ClosedLoop, noise_param)?;
    let open_loop = calibrate_mode(cfg, LoopMode::OpenLoop, noise_param)?;
    Ok(CalibrationArtifact {
        seed: cfg.seed,
        calibration_rate_dps: CAL_RATE_DPS,
        noise,
        closed_loop,
        open_loop,
    })
}

pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let art = calibrate(cfg)?;
    let mut report = MetricsReport::new("calibrate", cfg.seed);
    let trim = || Bound::range(49.9, 50.1, rows::TRIM);
    report.check(
        "closed_loop_reading_dps",
        art.closed_loop.check_reading_dps,
        "deg/s",
        trim(),
    );
    report.check(
        "open_loop_reading_dps",
        art.open_loop.check_reading_dps,
        "deg/s",
        trim(),
    );
    if let Some(n) = &art.noise {
        report.info("pickoff_noise_v_rthz", n.pickoff_noise, "V/rtHz");
        report.check(
            "rate_noise_density_dps_rthz",
            n.density,
            "deg/s/rtHz",
            Bound::range(0.04, 0.13, rows::NOISE),
        );
    }
    let mut text = serde_json::to_string_pretty(&art).expect("artifact serializes");
    text.push('\n');
    let mut out = ScenarioOutput::new(report);
    out.artifacts.push(("calibration.json".into(), text));
    Ok(out)
}
