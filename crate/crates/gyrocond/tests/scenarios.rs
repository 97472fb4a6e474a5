//! Scenario behaviour under parameter changes, mostly as paired runs.

use gyrocond::config::{ScenarioConfig, ScenarioKind};
use gyrocond::report::ScenarioOutput;
use gyrocond::scenarios::{self, ScenarioError};
use gyrocond_core::gyro::GyroParams;
use serde_json::json;

fn run(cfg: &ScenarioConfig) -> ScenarioOutput {
    scenarios::run(cfg).unwrap_or_else(|e| panic!("{:?}: {e}", cfg.scenario))
}

fn value(out: &ScenarioOutput, name: &str) -> f64 {
    out.report
        .value(name)
        .unwrap_or_else(|| panic!("metric {name} missing"))
}

fn quiet(cfg: ScenarioConfig) -> ScenarioConfig {
    cfg.with_gyro("pickoff_noise", json!(0.0))
}

fn ideal(cfg: ScenarioConfig) -> ScenarioConfig {
    quiet(cfg).with_gyro("k3", json!(0.0))
}

fn open_loop(cfg: ScenarioConfig) -> ScenarioConfig {
    cfg.with_chain("mode", json!("open_loop"))
}

#[test]
fn detuned_resonator_still_locks() {
    let cfg = ScenarioConfig::new(ScenarioKind::Lock, 1)
        .with_gyro("f1", json!(15_150.0))
        .with_gyro("f2", json!(15_150.0));
    let out = run(&cfg);
    assert!(out.report.pass, "{}", out.report.to_json());
    assert!(value(&out, "freq_error_ppm") <= 100.0);
    assert!((value(&out, "resonance_hz") - 15_150.0).abs() < 1e-9);
}

#[test]
fn noise_off_reaches_the_numerical_floor() {
    let mut cfg = quiet(ScenarioConfig::new(ScenarioKind::Noise, 1));
    cfg.duration_s = Some(5.0);
    let d = value(&run(&cfg), "rate_noise_density_dps_rthz");
    assert!(d < 1e-4, "density {d}");
}

#[test]
fn doubling_pickoff_noise_doubles_density() {
    let density = |pn: f64| {
        let mut cfg = ScenarioConfig::new(ScenarioKind::Noise, 4).with_gyro("pickoff_noise", json!(pn));
        cfg.duration_s = Some(10.0);
        value(&run(&cfg), "rate_noise_density_dps_rthz")
    };
    let base = GyroParams::CALIBRATED_PICKOFF_NOISE;
    let ratio = density(2.0 * base) / density(base);
    assert!((ratio - 2.0).abs() <= 0.3, "ratio {ratio}");
}

#[test]
fn short_noise_runs_are_refused() {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Noise, 1);
    cfg.duration_s = Some(4.9);
    assert!(matches!(scenarios::run(&cfg), Err(ScenarioError::Param(_))));
}

#[test]
fn ideal_open_loop_chain_is_linear() {
    let out = run(&open_loop(ideal(ScenarioConfig::new(ScenarioKind::Linearity, 1))));
    let nl = value(&out, "nonlinearity_pct_fs");
    assert!(nl <= 0.01, "nonlinearity {nl} %FS");
    assert!((value(&out, "sensitivity_mv_per_dps") - 5.0).abs() <= 0.05);
}

#[test]
fn ideal_closed_loop_is_limited_by_the_rebalance_dac() {
    // Noise-free, the 12-bit rebalance DAC's staircase shows through; a
    // 16-bit DAC shrinks the error by roughly the LSB ratio.
    let base = ideal(ScenarioConfig::new(ScenarioKind::Linearity, 1));
    let nl12 = value(&run(&base), "nonlinearity_pct_fs");
    let nl16 = value(&run(&base.clone().with_chain("dac_bits", json!(16))), "nonlinearity_pct_fs");
    assert!(nl12 < 1.0, "12-bit {nl12}");
    assert!(nl16 < nl12 / 4.0, "16-bit {nl16} vs 12-bit {nl12}");
}

#[test]
fn raising_k3_raises_open_loop_nonlinearity() {
    let nl = |k3: f64| {
        let cfg = open_loop(quiet(ScenarioConfig::new(ScenarioKind::Linearity, 1)))
            .with_gyro("k3", json!(k3));
        value(&run(&cfg), "nonlinearity_pct_fs")
    };
    let k3 = GyroParams::default().k3;
    let (a, b, c) = (nl(0.0), nl(k3), nl(10.0 * k3));
    assert!(a < b && b < c, "{a} {b} {c}");
}

#[test]
fn bandwidth_follows_the_channel_corner() {
    let cfg = |corner: f64| {
        let mut c = ScenarioConfig::new(ScenarioKind::Bandwidth, 1).with_chain("channel_corner_hz", json!(corner));
        c.params.freqs_hz = Some(vec![1.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0, 70.0]);
        c
    };
    let full = run(&cfg(50.0));
    let half = run(&cfg(25.0));
    assert!(full.report.pass, "{}", full.report.to_json());
    assert!(value(&full, "response_1hz_db").abs() <= 0.1);
    let ratio = value(&half, "f3db_hz") / value(&full, "f3db_hz");
    assert!((ratio - 0.5).abs() <= 0.05, "ratio {ratio}");
}

#[test]
fn bandwidth_rejects_frequencies_beyond_nyquist() {
    for bad in [vec![0.0], vec![10.0, 500.0], vec![-1.0], vec![]] {
        let mut cfg = ScenarioConfig::new(ScenarioKind::Bandwidth, 1);
        cfg.params.freqs_hz = Some(bad);
        assert!(matches!(scenarios::run(&cfg), Err(ScenarioError::Param(_))));
    }
}

fn sweep(compensation: bool, cfg: ScenarioConfig) -> ScenarioOutput {
    let mut cfg = cfg;
    cfg.params.compensation = Some(compensation);
    cfg.params.t_step = Some(62.5);
    run(&cfg)
}

#[test]
fn compensation_narrows_the_sensitivity_spread() {
    let base = ScenarioConfig::new(ScenarioKind::TempSweep, 1);
    let on = sweep(true, base.clone());
    let off = sweep(false, base);
    assert!(on.report.pass, "{}", on.report.to_json());
    let spread = |o: &ScenarioOutput| value(o, "sensitivity_spread_mv_per_dps");
    assert!(spread(&off) > spread(&on), "off {} on {}", spread(&off), spread(&on));
}

#[test]
fn drift_free_resonator_sweeps_flat() {
    let cfg = quiet(ScenarioConfig::new(ScenarioKind::TempSweep, 1))
        .with_gyro("tc_f", json!(0.0))
        .with_gyro("tc_g", json!(0.0));
    let out = sweep(false, cfg);
    assert!(value(&out, "sensitivity_spread_mv_per_dps") < 1e-3);
    assert!(value(&out, "null_drift_v") < 1e-3);
}

#[test]
fn suppression_and_agreement_on_defaults() {
    let out = run(&ScenarioConfig::new(ScenarioKind::Suppression, 1));
    assert!(out.report.pass, "{}", out.report.to_json());
}

#[test]
fn runs_are_deterministic() {
    let cfg = ScenarioConfig::new(ScenarioKind::Lock, 7);
    let a = run(&cfg);
    let b = run(&cfg);
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.traces, b.traces);
}
