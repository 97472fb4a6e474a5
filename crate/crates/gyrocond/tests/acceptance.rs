//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Criteria are evaluated in parallel and reported in order.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use gyrocond::analysis::welch_psd;
use gyrocond::config::{ScenarioConfig, ScenarioKind, Stimulus};
use gyrocond::report::ScenarioOutput;
use gyrocond::scenarios::{self, CalibrationArtifact};
use gyrocond_core::dsp::chain::{LoopMode, FS_FAST};
use gyrocond_core::dsp::demod::Demodulator;
use gyrocond_core::dsp::nco::{cos_lut, frequency_word, sin_lut};
use gyrocond_core::gyro::{derive_stepper, GyroParams, GyroState};
use gyrocond_core::regmap::{Access, RegisterFile, StuckBit};
use gyrocond_core::{ChainConfig, SimConfig, Simulation, PHYSICS_DT};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scenario(kind: ScenarioKind) -> Result<ScenarioOutput, String> {
    scenarios::run(&ScenarioConfig::new(kind, 1)).map_err(|e| format!("{}: {e}", kind.name()))
}

fn metric(out: &ScenarioOutput, name: &str) -> f64 {
    out.report.value(name).unwrap_or(f64::NAN)
}

fn turn_on() -> Outcome {
    let start = Instant::now();
    let mut sim = Simulation::new(SimConfig::default()).map_err(|e| e.to_string())?;
    // 500 ms of simulated time: 5e5 physics steps.
    sim.run_for(0.5).map_err(|e| e.to_string())?;
    let wall = start.elapsed().as_secs_f64();
    let s = sim.status();
    let t = s.turn_on_time_ms.map_or(f64::NAN, |t| t as f64);
    check(
        s.ready && t <= 500.0 && wall <= 30.0,
        format!("ready at {t} ms simulated, {wall:.2} s wall for 5e5 steps"),
    )
}

fn linearity() -> Outcome {
    let out = scenario(ScenarioKind::Linearity)?;
    check(
        out.report.pass,
        format!(
            "{:.4} mV/(deg/s), null {:.5} V, nonlinearity {:.3} %FS",
            metric(&out, "sensitivity_mv_per_dps"),
            metric(&out, "null_v"),
            metric(&out, "nonlinearity_pct_fs"),
        ),
    )
}

fn calibration_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("calibration")
}

fn noise() -> Outcome {
    let out = scenario(ScenarioKind::Noise)?;
    let density = metric(&out, "rate_noise_density_dps_rthz");
    let dir = calibration_dir();
    let script = ScenarioConfig::from_json(
        &std::fs::read_to_string(dir.join("calibrate.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let artifact: CalibrationArtifact = serde_json::from_str(
        &std::fs::read_to_string(dir.join("default.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let solved = artifact.noise.as_ref().map(|n| n.pickoff_noise);
    let committed = script.scenario == ScenarioKind::Calibrate
        && solved == Some(GyroParams::CALIBRATED_PICKOFF_NOISE)
        && artifact.closed_loop.poly == ChainConfig::calibrated(LoopMode::ClosedLoop).compensation
        && artifact.open_loop.poly == ChainConfig::calibrated(LoopMode::OpenLoop).compensation;
    check(
        out.report.pass && committed,
        format!(
            "{density:.4} deg/s/rtHz over 20 s; committed pickoff noise {:e} V/rtHz {}",
            GyroParams::CALIBRATED_PICKOFF_NOISE,
            if committed { "matches the artifact" } else { "does not match the artifact" },
        ),
    )
}

fn bandwidth() -> Outcome {
    let out = scenario(ScenarioKind::Bandwidth)?;
    check(out.report.pass, format!("f3db {:.2} Hz", metric(&out, "f3db_hz")))
}

fn over_temperature() -> Outcome {
    let out = scenario(ScenarioKind::TempSweep)?;
    check(
        out.report.pass,
        format!(
            "-40..85 degC: {:.4} .. {:.4} mV/(deg/s)",
            metric(&out, "sensitivity_min_mv_per_dps"),
            metric(&out, "sensitivity_max_mv_per_dps"),
        ),
    )
}

fn suppression() -> Outcome {
    let out = scenario(ScenarioKind::Suppression)?;
    check(
        out.report.pass,
        format!(
            "{:.1} dB, readouts agree to {:.3} %",
            metric(&out, "suppression_db"),
            metric(&out, "readout_agreement_pct"),
        ),
    )
}

/// RK4 of the continuous two-mode equations with inputs held per step.
fn rk4_error(p: GyroParams, omega_z: f64) -> f64 {
    let stepper = derive_stepper(&p, 25.0, PHYSICS_DT).unwrap();
    let (w1, w2) = (TAU * p.f1, TAU * p.f2);
    let deriv = |s: [f64; 4], d: f64, c: f64| {
        let [x1, v1, x2, v2] = s;
        [
            v1,
            -w1 * w1 * x1 - w1 / p.q1 * v1 + p.g_drive * d / p.mass,
            v2,
            -w2 * w2 * x2 - w2 / p.q2 * v2 + 2.0 * p.kappa * omega_z * v1 + p.g_drive * c / p.mass
                - p.k3 * w2 * w2 * x2 * x2 * x2,
        ]
    };
    let add = |a: [f64; 4], b: [f64; 4], k: f64| [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2], a[3] + k * b[3]];
    let mut zoh = GyroState {
        x1: 2e-6,
        omega_z,
        ..GyroState::default()
    };
    let mut rk = [zoh.x1, 0.0, 0.0, 0.0];
    let h = PHYSICS_DT / 100.0;
    let (mut e1, mut e2, mut m1, mut m2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for n in 0..10_000 {
        let t = n as f64 * PHYSICS_DT;
        let d = 0.5 * (TAU * 15_000.0 * t).cos();
        let c = 0.02 * (TAU * 15_000.0 * t + 0.3).sin();
        zoh = stepper.step(&zoh, d, c, &p).unwrap().0;
        for _ in 0..100 {
            let k1 = deriv(rk, d, c);
            let k2 = deriv(add(rk, k1, h / 2.0), d, c);
            let k3 = deriv(add(rk, k2, h / 2.0), d, c);
            let k4 = deriv(add(rk, k3, h), d, c);
            for i in 0..4 {
                rk[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        e1 = e1.max((zoh.x1 - rk[0]).abs());
        e2 = e2.max((zoh.x2 - rk[2]).abs());
        m1 = m1.max(rk[0].abs());
        m2 = m2.max(rk[2].abs());
    }
    (e1 / m1).max(e2 / m2)
}

fn demod_error() -> f64 {
    let fw = frequency_word(15_000.0, FS_FAST);
    let a = 0.8;
    let mut worst = 0.0f64;
    for k in 0..8 {
        let phi = k as f64 * PI / 4.0;
        let mut demod = Demodulator::new(25, FS_FAST, 1000.0);
        let mut phase = 0u32;
        for _ in 0..10_000 {
            let theta = TAU * phase as f64 / 4_294_967_296.0;
            demod.push(a * (theta + phi).sin(), sin_lut(phase), cos_lut(phase));
            phase = phase.wrapping_add(fw);
        }
        let (i, q) = demod.output();
        worst = worst.max((i - a * phi.cos()).abs() / a).max((q - a * phi.sin()).abs() / a);
    }
    worst
}

/// Welch integral of unit-variance noise, and its worst bin deviation from
/// a direct DFT of the same segments.
fn welch_check() -> (f64, f64) {
    let mut rng = StdRng::seed_from_u64(3);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..65_536).map(|_| normal.sample(&mut rng)).collect();
    let (fs, n) = (1000.0, 256);
    let psd = welch_psd(&x, fs, n, 0.5).unwrap();

    let w: Vec<f64> = (0..n).map(|k| 0.5 - 0.5 * (TAU * k as f64 / n as f64).cos()).collect();
    let wpow: f64 = w.iter().map(|v| v * v).sum();
    let mut acc = vec![0.0; n / 2 + 1];
    let mut segs = 0;
    let mut s = 0;
    while s + n <= x.len() {
        let seg = &x[s..s + n];
        let m = seg.iter().sum::<f64>() / n as f64;
        for (k, p) in acc.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in seg.iter().enumerate() {
                let ph = TAU * (k * j) as f64 / n as f64;
                re += (v - m) * w[j] * ph.cos();
                im -= (v - m) * w[j] * ph.sin();
            }
            *p += re * re + im * im;
        }
        segs += 1;
        s += n / 2;
    }
    let mut worst = 0.0f64;
    for (k, p) in acc.iter().enumerate() {
        let two = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
        let direct = two * p / (fs * wpow * segs as f64);
        worst = worst.max((psd.density[k] - direct).abs() / direct);
    }
    (psd.total_power(), worst)
}

fn oracles() -> Outcome {
    let zoh = rk4_error(GyroParams::default().without_noise(), 1.0);
    let demod = demod_error();
    let (power, dft) = welch_check();
    check(
        zoh <= 1e-6 && demod <= 1e-3 && (power - 1.0).abs() <= 0.05 && dft <= 1e-9,
        format!(
            "stepper vs RK4 {zoh:.2e}; demod {:.4} %; Welch power {power:.4}, vs DFT {dft:.1e}",
            demod * 100.0
        ),
    )
}

fn read_back() -> Outcome {
    let mut sim = Simulation::new(SimConfig::default()).map_err(|e| e.to_string())?;
    let report = sim.selfcheck(1).map_err(|e| e.to_string())?;

    let mut rf = RegisterFile::new(&ChainConfig::default());
    let rw: Vec<usize> = (0..rf.descriptors().len())
        .filter(|&i| rf.descriptors()[i].access == Access::Rw)
        .collect();
    let mut rng = StdRng::seed_from_u64(10_000);
    let (mut accepted, mut mismatches) = (0, 0);
    for _ in 0..10_000 {
        let i = rw[rng.random_range(0..rw.len())];
        let d = rf.descriptors()[i];
        let v = match rng.random_range(0..3) {
            0 => rng.random::<u32>(),
            1 => rng.random::<u32>() & d.mask(),
            _ => ((d.reset_value as f64) * rng.random_range(0.5..1.5)) as u32 & d.mask(),
        };
        let before = rf.read_all().map_err(|e| e.to_string())?;
        let result = rf.write_register(d.name, v);
        let after = rf.read_all().map_err(|e| e.to_string())?;
        let mut want = before;
        if result.is_ok() {
            want[i] = v;
            accepted += 1;
        }
        mismatches += (after != want) as usize;
    }

    let mut named = true;
    for (name, bit) in [("PLL_KP", 7), ("AGC_SETPOINT", 30), ("LOOP_MODE", 0)] {
        let mut rf = RegisterFile::new(&ChainConfig::default());
        let pos = rf.bit_position(name, bit).map_err(|e| e.to_string())?;
        rf.inject_stuck_bit(Some(StuckBit { bit: pos, value: true }));
        let r = rf.selfcheck(2).map_err(|e| e.to_string())?;
        named &= !r.pass && r.failed_registers() == [name.to_string()];
    }
    check(
        report.pass && report.patterns == 32 + 64 && mismatches == 0 && named,
        format!(
            "selfcheck {} over {} patterns; 10000 round trips ({accepted} accepted), {mismatches} mismatches; stuck bits {}",
            if report.pass { "passes" } else { "fails" },
            report.patterns,
            if named { "named" } else { "not named" },
        ),
    )
}

/// Scenario configurations kept short enough to run twice.
fn determinism_configs() -> Vec<ScenarioConfig> {
    ScenarioKind::ALL
        .iter()
        .map(|&kind| {
            let mut c = ScenarioConfig::new(kind, 42);
            match kind {
                ScenarioKind::Linearity => c.params.n_points = Some(3),
                ScenarioKind::Noise => c.duration_s = Some(5.0),
                ScenarioKind::Bandwidth => c.params.freqs_hz = Some(vec![1.0, 40.0, 60.0]),
                ScenarioKind::TempSweep => c.params.t_step = Some(125.0),
                ScenarioKind::Calibrate => c.params.calibrate_noise = Some(false),
                ScenarioKind::Stimulus => {
                    c.stimulus = Some(Stimulus::RateSine {
                        amplitude_dps: 30.0,
                        freq_hz: 7.0,
                    });
                    c.duration_s = Some(0.5);
                }
                _ => {}
            }
            c
        })
        .collect()
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut differing = Vec::new();
    let mut files = 0;
    for cfg in determinism_configs() {
        let name = cfg.scenario.name();
        let mut outputs = Vec::new();
        for run in 0..2 {
            let dir = root.path().join(format!("{name}-{run}"));
            scenarios::run(&cfg)
                .map_err(|e| format!("{name}: {e}"))?
                .write(&dir)
                .map_err(|e| e.to_string())?;
            outputs.push(read_dir(&dir));
        }
        files += outputs[0].len();
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            differing.push(name);
        }
    }
    // The same through the command line.
    let config = root.path().join("lock.json");
    std::fs::write(&config, r#"{"scenario": "lock", "seed": 5}"#).map_err(|e| e.to_string())?;
    let mut cli = Vec::new();
    for run in 0..2 {
        let dir = root.path().join(format!("cli-{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_gyrocond"))
            .arg("run")
            .arg("lock")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&dir)
            .output()
            .map_err(|e| e.to_string())?
            .status;
        if !status.success() {
            return Err(format!("command line run exited with {status}"));
        }
        cli.push(read_dir(&dir));
    }
    if cli[0] != cli[1] {
        differing.push("lock (command line)");
    }
    check(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} scenarios and the command line, {files} files byte-identical", ScenarioKind::ALL.len())
        } else {
            format!("outputs differ: {}", differing.join(", "))
        },
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("turn-on", turn_on),
        ("sensitivity/null/nonlinearity", linearity),
        ("noise density", noise),
        ("bandwidth", bandwidth),
        ("over-temperature", over_temperature),
        ("closed-loop suppression", suppression),
        ("oracle equivalence", oracles),
        ("read-back", read_back),
        ("determinism", determinism),
    ];
    let outcomes: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, f)| s.spawn(f)).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("panicked".to_string())))
            .collect()
    });
    let mut failed = 0;
    for ((name, _), outcome) in criteria.iter().zip(&outcomes) {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
