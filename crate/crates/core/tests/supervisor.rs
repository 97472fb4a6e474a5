//! Start-up sequencing, status monitoring, watchdog and trace capture.

use gyrocond_core::regmap::RegError;
use gyrocond_core::sim::SimError;
use gyrocond_core::supervisor::{CaptureError, CaptureRequest, TRACE_CAPACITY};
use gyrocond_core::{RateInput, SimConfig, Simulation, StartupPhase, TapId};

const TICKS_PER_MS: u64 = 250;

fn ready_sim() -> Simulation {
    let mut sim = Simulation::new(SimConfig::default()).unwrap();
    assert!(sim.run_startup().unwrap().ready);
    sim
}

#[test]
fn default_configuration_turns_on_within_500_ms() {
    let mut sim = Simulation::new(SimConfig::default()).unwrap();
    let s = sim.run_startup().unwrap();
    assert!(s.ready);
    let t = s.turn_on_time_ms.unwrap();
    assert!(t <= 500, "turn-on {t} ms");
    assert_eq!(sim.read_register("TURN_ON_TIME_MS").unwrap(), t);
}

#[test]
fn ready_implies_lock_and_settle_at_every_poll() {
    let mut sim = Simulation::new(SimConfig::default()).unwrap();
    for _ in 0..400 {
        sim.run_ticks(TICKS_PER_MS).unwrap();
        let s = sim.status();
        if s.ready {
            assert!(s.pll_locked && s.agc_settled);
        }
        assert!(!(s.watchdog_expired && s.ready));
    }
}

#[test]
fn status_read_has_no_side_effects() {
    let mut a = ready_sim();
    let mut b = ready_sim();
    for _ in 0..50 {
        let _ = a.status();
        let _ = a.read_register("STATUS").unwrap();
    }
    a.run_for(0.01).unwrap();
    b.run_for(0.01).unwrap();
    assert_eq!(a.tap_value(TapId::OutputVolts), b.tap_value(TapId::OutputVolts));
    assert_eq!(a.status(), b.status());
}

#[test]
fn inert_pll_faults_at_lock_phase() {
    let mut cfg = SimConfig::default();
    cfg.chain.pll.kp = 0.0;
    cfg.chain.pll.ki = 0.0;
    let mut sim = Simulation::new(cfg).unwrap();
    let s = sim.run_startup().unwrap();
    assert!(!s.ready);
    assert!(s.config_fault);
    assert_eq!(s.fault_phase, Some(StartupPhase::PllLock));
}

#[test]
fn zero_setpoint_is_rejected_and_faults_at_settle() {
    let mut sim = Simulation::new(SimConfig::default()).unwrap();
    let err = sim.write_real("AGC_SETPOINT", 0.0).unwrap_err();
    assert!(matches!(err, SimError::Reg(RegError::Rejected { register: "AGC_SETPOINT", .. })));

    // Booting with it: the supervisor's programming write is refused too.
    let mut cfg = SimConfig::default();
    cfg.chain.agc.setpoint = 0.0;
    let mut sim = Simulation::new(cfg).unwrap();
    let s = sim.run_startup().unwrap();
    assert!(!s.ready);
    assert!(s.config_fault);
    assert_eq!(s.fault_phase, Some(StartupPhase::AgcSettle));
}

#[test]
fn forced_frequency_step_drops_lock_and_ready() {
    let mut sim = ready_sim();
    sim.run_for(0.05).unwrap();
    assert!(sim.status().pll_locked);
    sim.force_nco(Some(15_000.0 * 1.05));
    let mut lost = None;
    for tick in 0..(20 * TICKS_PER_MS) {
        sim.step().unwrap();
        if !sim.status().pll_locked {
            lost = Some(tick);
            break;
        }
    }
    // One poll period plus the time for the filtered error to cross 2·eps.
    let lost = lost.expect("lock never dropped");
    assert!(lost <= 2 * TICKS_PER_MS, "lock lost after {lost} ticks");
    assert!(!sim.status().ready);
}

#[test]
fn watchdog_expires_at_timeout_and_forces_safe_state() {
    let mut sim = ready_sim();
    sim.set_watchdog_autokick(false);
    sim.kick_watchdog();
    let start = sim.ticks();
    while !sim.in_safe_state() {
        sim.step().unwrap();
        assert!(sim.ticks() - start <= 200 * TICKS_PER_MS);
    }
    let elapsed = sim.ticks() - start;
    let timeout = 100 * TICKS_PER_MS;
    assert!(elapsed.abs_diff(timeout) <= 1, "expired after {elapsed} ticks");
    assert_eq!(sim.dac_outputs(), (0.0, 0.0));

    sim.run_ticks(TICKS_PER_MS).unwrap();
    let s = sim.status();
    assert!(s.watchdog_expired && !s.ready);

    // Sticky: kicks after expiry change nothing.
    for _ in 0..10 {
        sim.kick_watchdog();
        sim.run_ticks(TICKS_PER_MS).unwrap();
        assert_eq!(sim.dac_outputs(), (0.0, 0.0));
    }
    assert!(sim.status().watchdog_expired);

    sim.reset().unwrap();
    assert!(!sim.status().watchdog_expired);
    assert!(!sim.in_safe_state());
}

#[test]
fn regular_kicks_keep_the_watchdog_quiet() {
    let mut sim = ready_sim();
    sim.set_watchdog_autokick(false);
    for _ in 0..300 {
        sim.kick_watchdog();
        sim.run_ticks(TICKS_PER_MS).unwrap();
    }
    assert!(!sim.in_safe_state());
    assert!(sim.status().ready);
}

#[test]
fn capture_of_null_output() {
    let mut sim = ready_sim();
    let t = sim
        .capture(CaptureRequest {
            tap: TapId::OutputVolts,
            count: 1000,
            decimation: 1,
        })
        .unwrap();
    assert_eq!(t.len(), 1000);
    assert!(!t.truncated);
    assert_eq!(t.fs, 1000.0);
    let v = t.values();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean - 2.5).abs() <= 0.005, "mean {mean}");
    // One quantization step plus a generous band for the rate noise.
    for x in &v {
        assert!((x - 2.5).abs() <= t.scale + 0.08, "sample {x}");
    }
}

#[test]
fn capture_limits() {
    let mut sim = Simulation::new(SimConfig::default()).unwrap();
    assert_eq!(TRACE_CAPACITY, 32_768);
    let over = CaptureRequest {
        tap: TapId::OutputVolts,
        count: TRACE_CAPACITY + 1,
        decimation: 1,
    };
    assert!(matches!(
        sim.start_capture(over),
        Err(SimError::Capture(CaptureError::Capacity(32_769)))
    ));
    let ok = CaptureRequest {
        tap: TapId::DemodI,
        count: 10,
        decimation: 3,
    };
    sim.start_capture(ok).unwrap();
    assert!(matches!(
        sim.start_capture(ok),
        Err(SimError::Capture(CaptureError::Busy))
    ));
    assert!(TapId::from_name("no_such_tap").is_none());
}

#[test]
fn capture_is_deterministic() {
    let run = || {
        let mut sim = ready_sim();
        sim.set_rate(RateInput::DegPerSec(20.0)).unwrap();
        sim.capture(CaptureRequest {
            tap: TapId::RateCompensated,
            count: 2000,
            decimation: 1,
        })
        .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn capture_decimates_the_native_rate() {
    let mut sim = ready_sim();
    let t = sim
        .capture(CaptureRequest {
            tap: TapId::PrimaryPickoffAdc,
            count: 100,
            decimation: 5,
        })
        .unwrap();
    assert_eq!(t.fs, 50_000.0);
    assert_eq!(t.len(), 100);
}

#[test]
fn lossless_primary_locks_to_its_resonance() {
    let mut cfg = SimConfig::default();
    cfg.gyro.q1 = f64::INFINITY;
    cfg.gyro.pickoff_noise = 0.0;
    let f1 = cfg.gyro.f1;
    let init = cfg.chain.agc.init;
    let mut sim = Simulation::new(cfg).unwrap();
    assert!(sim.run_startup().unwrap().ready);
    sim.run_for(0.2).unwrap();
    let words = sim.probe(TapId::NcoFw, 1);
    let gains = sim.probe(TapId::AgcGain, 1);
    sim.run_for(0.2).unwrap();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let nco = mean(sim.drain_probe(words));
    let drive = mean(sim.drain_probe(gains));
    // No power is needed at the setpoint; the drive the AGC integrator
    // keeps acts as a small stiffness and pulls the lock by a few ppm.
    assert!(drive.abs() < 0.01 * init, "residual drive {drive} V");
    let ppm = (nco / f1 - 1.0) * 1e6;
    assert!(ppm.abs() < 5.0, "locked {ppm} ppm away");
}

#[test]
fn probe_handles_survive_a_finished_capture() {
    let mut sim = ready_sim();
    let before = sim.probe(TapId::OutputVolts, 1);
    sim.start_capture(CaptureRequest {
        tap: TapId::NcoFw,
        count: 10,
        decimation: 1,
    })
    .unwrap();
    let after = sim.probe(TapId::OutputVolts, 1);
    sim.run_for(0.005).unwrap();
    assert_eq!(sim.take_capture().unwrap().len(), 10);
    sim.run_for(0.005).unwrap();
    let (a, b) = (sim.drain_probe(before), sim.drain_probe(after));
    assert_eq!(a.len(), 10);
    assert_eq!(a, b);
    assert!(a.iter().all(|v| (v - 2.5).abs() < 0.1));
    // Cleared handles go quiet instead of reading someone else's data.
    sim.clear_probes();
    sim.run_for(0.002).unwrap();
    assert!(sim.drain_probe(before).is_empty());
}
