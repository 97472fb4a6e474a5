//! Two-mode vibrating-ring gyro.
//!
//! The ring is reduced to its primary (driven) and secondary (sense) modal
//! coordinates, each a damped second-order resonator
//!
//! ```text
//! ẍ + (ω/Q)·ẋ + ω²·x = F/m
//! ```
//!
//! coupled by the Coriolis force `2·κ·m·Ω·ẋ₁` acting on the secondary mode.
//! The linear four-state system is advanced with its exact zero-order-hold
//! transition matrix, so a step is unconditionally stable and exact for
//! piecewise-constant forcing and rate. The coupling is one-way, which makes
//! its block linear in Ω; it is derived once per temperature. The cubic
//! stiffness of the secondary mode is applied as a per-step force evaluated at
//! the predicted mid-step displacement.

use libm::{cos, exp, sin, sqrt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afe::NoiseSource;
use crate::{PHYSICS_DT, PHYSICS_RATE, REFERENCE_TEMP};

/// Lowest and highest temperature accepted by [`set_environment`], °C.
pub const TEMP_GUARD: (f64, f64) = (-55.0, 150.0);

/// Stepper is re-derived once the temperature moved further than this, °C.
pub const STEPPER_REFRESH_DELTA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GyroError {
    #[error("time step {dt} s does not resolve a {freq} Hz resonance")]
    Undersampled { dt: f64, freq: f64 },
    #[error("invalid parameter `{0}`")]
    InvalidParam(&'static str),
    #[error("temperature {0} °C outside the guard band")]
    TemperatureOutOfBand(f64),
    #[error("non-finite value in `{0}`")]
    NonFinite(&'static str),
}

/// Physical parameters of the two-mode model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GyroParams {
    /// Primary resonance at the reference temperature, Hz.
    pub f1: f64,
    /// Secondary resonance at the reference temperature, Hz.
    pub f2: f64,
    pub q1: f64,
    pub q2: f64,
    /// Coriolis coupling (angular gain).
    pub kappa: f64,
    /// Modal mass, kg.
    pub mass: f64,
    /// Drive transduction, N/V.
    pub g_drive: f64,
    /// Pickoff transduction, V/m.
    pub g_pickoff: f64,
    /// Fractional resonance drift, 1/°C.
    pub tc_f: f64,
    /// Fractional pickoff-gain drift, 1/°C.
    pub tc_g: f64,
    /// Cubic stiffness of the secondary mode, 1/m².
    pub k3: f64,
    /// Pickoff noise density, V/√Hz.
    pub pickoff_noise: f64,
}

impl GyroParams {
    /// Pickoff noise density solved by the noise calibration scenario.
    pub const CALIBRATED_PICKOFF_NOISE: f64 = 1.475734494861363e-6;

    pub fn validate(&self) -> Result<(), GyroError> {
        let finite = [
            self.f1,
            self.f2,
            self.q1,
            self.q2,
            self.kappa,
            self.mass,
            self.g_drive,
            self.g_pickoff,
            self.tc_f,
            self.tc_g,
            self.k3,
            self.pickoff_noise,
        ];
        if finite.iter().any(|v| v.is_nan()) {
            return Err(GyroError::NonFinite("params"));
        }
        if !(self.f1 > 0.0 && self.f1.is_finite()) {
            return Err(GyroError::InvalidParam("f1"));
        }
        if !(self.f2 > 0.0 && self.f2.is_finite()) {
            return Err(GyroError::InvalidParam("f2"));
        }
        // Q may be infinite (lossless); below 1/2 the mode is overdamped,
        // which the underdamped transition matrix does not cover.
        if !(self.q1 > 0.5) {
            return Err(GyroError::InvalidParam("q1"));
        }
        if !(self.q2 > 0.5) {
            return Err(GyroError::InvalidParam("q2"));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(GyroError::InvalidParam("mass"));
        }
        if !(self.pickoff_noise >= 0.0 && self.pickoff_noise.is_finite()) {
            return Err(GyroError::InvalidParam("pickoff_noise"));
        }
        Ok(())
    }

    /// Resonance of a mode at temperature `temp`, Hz.
    pub fn drifted_freq(&self, freq: f64, temp: f64) -> f64 {
        freq * (1.0 + self.tc_f * (temp - REFERENCE_TEMP))
    }

    /// Pickoff gain at temperature `temp`, V/m.
    pub fn pickoff_gain(&self, temp: f64) -> f64 {
        self.g_pickoff * (1.0 + self.tc_g * (temp - REFERENCE_TEMP))
    }

    pub fn without_noise(mut self) -> Self {
        self.pickoff_noise = 0.0;
        self
    }
}

impl Default for GyroParams {
    fn default() -> Self {
        Self {
            f1: 15_000.0,
            f2: 15_000.0,
            q1: 5000.0,
            q2: 5000.0,
            kappa: 0.1,
            mass: 1.0,
            g_drive: 4.0,
            g_pickoff: 1e6,
            tc_f: -25e-6,
            tc_g: -100e-6,
            k3: 5.0e10,
            pickoff_noise: Self::CALIBRATED_PICKOFF_NOISE,
        }
    }
}

/// Modal state plus the environment the ring sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GyroState {
    pub x1: f64,
    pub v1: f64,
    pub x2: f64,
    pub v2: f64,
    /// °C
    pub temp: f64,
    /// Applied yaw rate, rad/s.
    pub omega_z: f64,
}

impl Default for GyroState {
    fn default() -> Self {
        Self {
            x1: 0.0,
            v1: 0.0,
            x2: 0.0,
            v2: 0.0,
            temp: REFERENCE_TEMP,
            omega_z: 0.0,
        }
    }
}

impl GyroState {
    fn is_finite(&self) -> bool {
        self.x1.is_finite()
            && self.v1.is_finite()
            && self.x2.is_finite()
            && self.v2.is_finite()
            && self.temp.is_finite()
            && self.omega_z.is_finite()
    }
}

/// Yaw rate with its unit spelled out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateInput {
    RadPerSec(f64),
    DegPerSec(f64),
}

impl RateInput {
    pub fn rad_per_sec(self) -> f64 {
        match self {
            RateInput::RadPerSec(r) => r,
            RateInput::DegPerSec(d) => d.to_radians(),
        }
    }
}

/// Applies a new yaw rate and temperature to `state`.
pub fn set_environment(
    state: &mut GyroState,
    rate: RateInput,
    temp: f64,
) -> Result<(), GyroError> {
    let omega = rate.rad_per_sec();
    if !omega.is_finite() {
        return Err(GyroError::NonFinite("omega_z"));
    }
    if !temp.is_finite() {
        return Err(GyroError::NonFinite("temp"));
    }
    if temp < TEMP_GUARD.0 || temp > TEMP_GUARD.1 {
        return Err(GyroError::TemperatureOutOfBand(temp));
    }
    state.omega_z = omega;
    state.temp = temp;
    Ok(())
}

/// Exact ZOH discretization of one resonator over a fixed step.
///
/// `[x, v]' = phi · [x, v] + gamma · (F/m)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeStepper {
    pub phi: [[f64; 2]; 2],
    pub gamma: [f64; 2],
    /// Angular resonance the stepper was derived for, rad/s.
    pub omega: f64,
}

impl ModeStepper {
    /// `q = f64::INFINITY` gives the lossless resonator.
    pub fn new(freq: f64, q: f64, dt: f64) -> Result<Self, GyroError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(GyroError::InvalidParam("dt"));
        }
        if !(freq > 0.0 && freq.is_finite()) {
            return Err(GyroError::InvalidParam("freq"));
        }
        if !(q > 0.5) {
            return Err(GyroError::InvalidParam("q"));
        }
        let omega = core::f64::consts::TAU * freq;
        if omega * dt >= 0.5 {
            return Err(GyroError::Undersampled { dt, freq });
        }
        let sigma = if q.is_infinite() { 0.0 } else { omega / (2.0 * q) };
        let wd = omega * sqrt(1.0 - sigma * sigma / (omega * omega));
        let e = exp(-sigma * dt);
        let (s, c) = (sin(wd * dt), cos(wd * dt));
        let phi = [
            [e * (c + sigma / wd * s), e * s / wd],
            [-e * omega * omega / wd * s, e * (c - sigma / wd * s)],
        ];
        // Constant force shifts the equilibrium to u/ω².
        let w2 = omega * omega;
        let gamma = [(1.0 - phi[0][0]) / w2, -phi[1][0] / w2];
        Ok(Self { phi, gamma, omega })
    }

    #[inline]
    pub fn step(&self, x: f64, v: f64, accel: f64) -> (f64, f64) {
        (
            self.phi[0][0] * x + self.phi[0][1] * v + self.gamma[0] * accel,
            self.phi[1][0] * x + self.phi[1][1] * v + self.gamma[1] * accel,
        )
    }

    /// Spectral radius of the transition matrix.
    pub fn spectral_radius(&self) -> f64 {
        // Complex pair for underdamped modes: |λ|² = det(phi).
        let det = self.phi[0][0] * self.phi[1][1] - self.phi[0][1] * self.phi[1][0];
        sqrt(det.abs())
    }
}

/// Per-mode steppers for a given temperature and step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorStepper {
    pub primary: ModeStepper,
    pub secondary: ModeStepper,
    /// Secondary `[x, v]` increment per unit Coriolis gain `2·κ·Ω` (1/s),
    /// from the primary `[x, v, accel]` at the start of the step.
    pub coupling: [[f64; 3]; 2],
    pub dt: f64,
    /// Temperature the steppers were derived at, °C.
    pub temp: f64,
}

const N: usize = 5;

/// `exp(a)` by its Taylor series; `a` must be well scaled (norm below ~1).
fn expm(a: &[[f64; N]; N]) -> [[f64; N]; N] {
    let mut out = [[0.0; N]; N];
    let mut term = [[0.0; N]; N];
    for i in 0..N {
        out[i][i] = 1.0;
        term[i][i] = 1.0;
    }
    for k in 1..40 {
        let mut next = [[0.0; N]; N];
        for i in 0..N {
            for j in 0..N {
                let mut acc = 0.0;
                for l in 0..N {
                    acc += term[i][l] * a[l][j];
                }
                next[i][j] = acc / k as f64;
            }
        }
        term = next;
        let mut largest = 0.0f64;
        for i in 0..N {
            for j in 0..N {
                out[i][j] += term[i][j];
                largest = largest.max(term[i][j].abs());
            }
        }
        if largest < 1e-18 {
            break;
        }
    }
    out
}

/// Coupling block of the ZOH transition matrix of the two modes joined by
/// a unit velocity coupling. Works in states scaled to `[ω₂x₂, v₂, ω₁x₁,
/// v₁, a₁/ω₁]` so every entry of the generator is of order `ω`.
fn coupling_block(p: &ModeStepper, s: &ModeStepper, q1: f64, q2: f64, dt: f64) -> [[f64; 3]; 2] {
    let (w1, w2) = (p.omega, s.omega);
    let damp = |w: f64, q: f64| if q.is_infinite() { 0.0 } else { w / q };
    let mut g = [[0.0; N]; N];
    g[0][1] = w2;
    g[1][0] = -w2;
    g[1][1] = -damp(w2, q2);
    g[1][3] = 1.0;
    g[2][3] = w1;
    g[3][2] = -w1;
    g[3][3] = -damp(w1, q1);
    g[3][4] = w1;
    for row in g.iter_mut() {
        for v in row.iter_mut() {
            *v *= dt;
        }
    }
    let e = expm(&g);
    [
        [e[0][2] * w1 / w2, e[0][3] / w2, e[0][4] / (w1 * w2)],
        [e[1][2] * w1, e[1][3], e[1][4] / w1],
    ]
}

/// Builds the steppers for both modes at temperature `temp`.
pub fn derive_stepper(
    params: &GyroParams,
    temp: f64,
    dt: f64,
) -> Result<ResonatorStepper, GyroError> {
    params.validate()?;
    let f1 = params.drifted_freq(params.f1, temp);
    let f2 = params.drifted_freq(params.f2, temp);
    let primary = ModeStepper::new(f1, params.q1, dt)?;
    let secondary = ModeStepper::new(f2, params.q2, dt)?;
    Ok(ResonatorStepper {
        primary,
        secondary,
        coupling: coupling_block(&primary, &secondary, params.q1, params.q2, dt),
        dt,
        temp,
    })
}

/// Noise-free pickoff voltages.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pickoffs {
    pub primary: f64,
    pub secondary: f64,
}

impl ResonatorStepper {
    /// Advances `state` by one step.
    pub fn step(
        &self,
        state: &GyroState,
        drive_v: f64,
        control_v: f64,
        params: &GyroParams,
    ) -> Result<(GyroState, Pickoffs), GyroError> {
        if !drive_v.is_finite() {
            return Err(GyroError::NonFinite("drive_v"));
        }
        if !control_v.is_finite() {
            return Err(GyroError::NonFinite("control_v"));
        }
        let m = params.mass;
        let a1 = params.g_drive * drive_v / m;
        let (x1, v1) = self.primary.step(state.x1, state.v1, a1);
        let w2 = self.secondary.omega;
        // Cubic stiffness at the predicted mid-step displacement.
        let xm = state.x2 + 0.5 * self.dt * state.v2;
        let f2 = params.g_drive * control_v - params.k3 * m * w2 * w2 * xm * xm * xm;
        let (mut x2, mut v2) = self.secondary.step(state.x2, state.v2, f2 / m);
        let c = 2.0 * params.kappa * state.omega_z;
        if c != 0.0 {
            let k = &self.coupling;
            x2 += c * (k[0][0] * state.x1 + k[0][1] * state.v1 + k[0][2] * a1);
            v2 += c * (k[1][0] * state.x1 + k[1][1] * state.v1 + k[1][2] * a1);
        }
        let next = GyroState {
            x1,
            v1,
            x2,
            v2,
            ..*state
        };
        if !next.is_finite() {
            return Err(GyroError::NonFinite("state"));
        }
        let g = params.pickoff_gain(state.temp);
        Ok((
            next,
            Pickoffs {
                primary: g * x1,
                secondary: g * x2,
            },
        ))
    }
}

/// The ring plus its pickoff noise generators, stepped at the physics rate.
///
/// Owns the stepper and re-derives it when the temperature moves by more
/// than [`STEPPER_REFRESH_DELTA`].
#[derive(Debug, Clone)]
pub struct Gyro {
    pub params: GyroParams,
    pub state: GyroState,
    stepper: ResonatorStepper,
    noise: [NoiseSource; 2],
    derivations: u64,
}

impl Gyro {
    pub fn new(params: GyroParams, seed: u64) -> Result<Self, GyroError> {
        let state = GyroState::default();
        let stepper = derive_stepper(&params, state.temp, PHYSICS_DT)?;
        let fs = PHYSICS_RATE as f64;
        Ok(Self {
            params,
            state,
            stepper,
            noise: [
                NoiseSource::new(params.pickoff_noise, fs, seed, 1),
                NoiseSource::new(params.pickoff_noise, fs, seed, 2),
            ],
            derivations: 1,
        })
    }

    pub fn stepper(&self) -> &ResonatorStepper {
        &self.stepper
    }

    /// Number of stepper derivations so far.
    pub fn derivations(&self) -> u64 {
        self.derivations
    }

    pub fn set_environment(&mut self, rate: RateInput, temp: f64) -> Result<(), GyroError> {
        set_environment(&mut self.state, rate, temp)?;
        if (temp - self.stepper.temp).abs() > STEPPER_REFRESH_DELTA {
            self.stepper = derive_stepper(&self.params, temp, PHYSICS_DT)?;
            self.derivations += 1;
        }
        Ok(())
    }

    /// Sets only the yaw rate; used by stimulus generators every tick.
    pub fn set_rate(&mut self, omega_z: f64) -> Result<(), GyroError> {
        if !omega_z.is_finite() {
            return Err(GyroError::NonFinite("omega_z"));
        }
        self.state.omega_z = omega_z;
        Ok(())
    }

    /// One physics tick; returns the pickoff voltages including noise.
    #[inline]
    pub fn tick(&mut self, drive_v: f64, control_v: f64) -> Result<Pickoffs, GyroError> {
        let (next, mut pick) =
            self.stepper
                .step(&self.state, drive_v, control_v, &self.params)?;
        self.state = next;
        pick.primary += self.noise[0].sample();
        pick.secondary += self.noise[1].sample();
        Ok(pick)
    }
}
