//! The exact stepper against an independent RK4 integration of the
//! continuous equations, plus closed-form resonance checks.

use std::f64::consts::TAU;

use gyrocond_core::gyro::{derive_stepper, GyroParams, GyroState};
use gyrocond_core::PHYSICS_DT;

/// Right-hand side of the continuous two-mode model with held inputs.
struct Ode {
    w1: f64,
    w2: f64,
    q1: f64,
    q2: f64,
    p: GyroParams,
    omega_z: f64,
}

impl Ode {
    fn deriv(&self, s: [f64; 4], drive: f64, control: f64) -> [f64; 4] {
        let [x1, v1, x2, v2] = s;
        let m = self.p.mass;
        let a1 = -self.w1 * self.w1 * x1 - self.w1 / self.q1 * v1 + self.p.g_drive * drive / m;
        let a2 = -self.w2 * self.w2 * x2 - self.w2 / self.q2 * v2
            + 2.0 * self.p.kappa * self.omega_z * v1
            + self.p.g_drive * control / m
            - self.p.k3 * self.w2 * self.w2 * x2 * x2 * x2;
        [v1, a1, v2, a2]
    }

    fn rk4(&self, s: [f64; 4], h: f64, drive: f64, control: f64) -> [f64; 4] {
        let add = |a: [f64; 4], b: [f64; 4], k: f64| {
            [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2], a[3] + k * b[3]]
        };
        let k1 = self.deriv(s, drive, control);
        let k2 = self.deriv(add(s, k1, h / 2.0), drive, control);
        let k3 = self.deriv(add(s, k2, h / 2.0), drive, control);
        let k4 = self.deriv(add(s, k3, h), drive, control);
        let mut out = s;
        for i in 0..4 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }
}

fn compare(p: GyroParams, temp: f64, omega_z: f64, ms: usize) -> (f64, f64) {
    let stepper = derive_stepper(&p, temp, PHYSICS_DT).unwrap();
    let ode = Ode {
        w1: TAU * p.drifted_freq(p.f1, temp),
        w2: TAU * p.drifted_freq(p.f2, temp),
        q1: p.q1,
        q2: p.q2,
        p,
        omega_z,
    };
    let mut zoh = GyroState {
        x1: 2e-6,
        temp,
        omega_z,
        ..GyroState::default()
    };
    let mut rk = [zoh.x1, 0.0, 0.0, 0.0];
    let (mut err1, mut err2, mut max1, mut max2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let sub = 100;
    for n in 0..ms * 1000 {
        let t = n as f64 * PHYSICS_DT;
        let drive = 0.5 * (TAU * 15_000.0 * t).cos();
        let control = 0.02 * (TAU * 15_000.0 * t + 0.3).sin();
        zoh = stepper.step(&zoh, drive, control, &p).unwrap().0;
        for _ in 0..sub {
            rk = ode.rk4(rk, PHYSICS_DT / sub as f64, drive, control);
        }
        err1 = err1.max((zoh.x1 - rk[0]).abs());
        err2 = err2.max((zoh.x2 - rk[2]).abs());
        max1 = max1.max(rk[0].abs());
        max2 = max2.max(rk[2].abs());
    }
    (err1 / max1, err2 / max2)
}

#[test]
fn exact_stepper_matches_rk4_over_10_ms() {
    let p = GyroParams::default().without_noise();
    let (e1, e2) = compare(p, 25.0, 1.0, 10);
    assert!(e1 <= 1e-6, "primary relative error {e1:e}");
    assert!(e2 <= 1e-6, "secondary relative error {e2:e}");
}

#[test]
fn exact_stepper_matches_rk4_when_detuned_and_hot() {
    let p = GyroParams {
        f2: 15_050.0,
        q1: 800.0,
        q2: f64::INFINITY,
        k3: 0.0,
        ..GyroParams::default().without_noise()
    };
    let (e1, e2) = compare(p, 85.0, -3.0, 10);
    assert!(e1 <= 1e-6, "primary relative error {e1:e}");
    assert!(e2 <= 1e-6, "secondary relative error {e2:e}");
}
