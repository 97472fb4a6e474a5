//! Filter primitives of the conditioning chain and their design routines.
//!
//! Every filter here has unit DC gain: the boxcar exactly, the designed FIR
//! and IIR stages to within coefficient rounding.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2, TAU};
use libm::{cos, exp, sin, sqrt, tan};

/// One-pole low-pass `y += a·(x − y)` with `a = 1 − exp(−2π·fc/fs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnePole {
    alpha: f64,
    y: f64,
}

impl OnePole {
    pub fn new(corner_hz: f64, fs: f64) -> Self {
        Self {
            alpha: one_pole_alpha(corner_hz, fs),
            y: 0.0,
        }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        self.y += self.alpha * (x - self.y);
        self.y
    }

    pub fn output(&self) -> f64 {
        self.y
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_corner(&mut self, corner_hz: f64, fs: f64) {
        self.alpha = one_pole_alpha(corner_hz, fs);
    }

    pub fn reset(&mut self, value: f64) {
        self.y = value;
    }

    /// Time constant in samples.
    pub fn time_constant_samples(&self) -> f64 {
        -1.0 / libm::log(1.0 - self.alpha)
    }
}

fn one_pole_alpha(corner_hz: f64, fs: f64) -> f64 {
    1.0 - exp(-TAU * corner_hz / fs)
}

/// Magnitude of a one-pole at `f`.
pub fn one_pole_response(alpha: f64, f: f64, fs: f64) -> f64 {
    // H(z) = a / (1 − (1−a) z⁻¹)
    let w = TAU * f / fs;
    let b = 1.0 - alpha;
    let re = 1.0 - b * cos(w);
    let im = b * sin(w);
    alpha / sqrt(re * re + im * im)
}

/// Integrate-and-dump decimator: exact mean of each block of `factor` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Boxcar {
    factor: usize,
    acc: f64,
    n: usize,
}

impl Boxcar {
    pub fn new(factor: usize) -> Self {
        assert!(factor > 0);
        Self {
            factor,
            acc: 0.0,
            n: 0,
        }
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    #[inline]
    pub fn push(&mut self, x: f64) -> Option<f64> {
        self.acc += x;
        self.n += 1;
        if self.n == self.factor {
            let out = self.acc / self.factor as f64;
            self.acc = 0.0;
            self.n = 0;
            Some(out)
        } else {
            None
        }
    }

    pub fn response(&self, f: f64, fs: f64) -> f64 {
        let x = PI * f / fs;
        let den = self.factor as f64 * sin(x);
        if den.abs() < 1e-300 {
            return 1.0;
        }
        (sin(self.factor as f64 * x) / den).abs()
    }

    pub fn reset(&mut self) {
        self.acc = 0.0;
        self.n = 0;
    }
}

/// Decimating FIR: one dot product per `factor` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FirDecimator {
    taps: Vec<f64>,
    factor: usize,
    // Delay line stored twice so a window is always contiguous.
    line: Vec<f64>,
    pos: usize,
    phase: usize,
}

impl FirDecimator {
    pub fn new(taps: Vec<f64>, factor: usize) -> Self {
        assert!(!taps.is_empty() && factor > 0);
        let n = taps.len();
        Self {
            taps,
            factor,
            line: vec![0.0; 2 * n],
            pos: 0,
            phase: 0,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    #[inline]
    pub fn push(&mut self, x: f64) -> Option<f64> {
        let n = self.taps.len();
        self.line[self.pos] = x;
        self.line[self.pos + n] = x;
        self.pos += 1;
        if self.pos == n {
            self.pos = 0;
        }
        self.phase += 1;
        if self.phase < self.factor {
            return None;
        }
        self.phase = 0;
        // Oldest sample is at `pos`; newest at `pos + n − 1`.
        let window = &self.line[self.pos..self.pos + n];
        let y = window
            .iter()
            .zip(self.taps.iter().rev())
            .map(|(a, b)| a * b)
            .sum();
        Some(y)
    }

    pub fn response(&self, f: f64, fs: f64) -> f64 {
        fir_response(&self.taps, f, fs)
    }

    pub fn reset(&mut self) {
        self.line.iter_mut().for_each(|v| *v = 0.0);
        self.pos = 0;
        self.phase = 0;
    }
}

/// Magnitude of an FIR at frequency `f`.
pub fn fir_response(taps: &[f64], f: f64, fs: f64) -> f64 {
    let w = TAU * f / fs;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, h) in taps.iter().enumerate() {
        re += h * cos(w * n as f64);
        im -= h * sin(w * n as f64);
    }
    sqrt(re * re + im * im)
}

/// Direct-form-I biquad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    /// Second-order Butterworth low-pass, bilinear with prewarping.
    pub fn butterworth_lowpass(corner_hz: f64, fs: f64) -> Self {
        let k = tan(PI * corner_hz / fs);
        let norm = 1.0 / (1.0 + SQRT_2 * k + k * k);
        let b0 = k * k * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - SQRT_2 * k + k * k) * norm],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    pub fn response(&self, f: f64, fs: f64) -> f64 {
        let w = TAU * f / fs;
        let num = cx_poly(&self.b, w);
        let den = cx_poly(&[1.0, self.a[0], self.a[1]], w);
        sqrt((num.0 * num.0 + num.1 * num.1) / (den.0 * den.0 + den.1 * den.1))
    }

    pub fn reset(&mut self, value: f64) {
        self.x = [value; 2];
        self.y = [value; 2];
    }
}

fn cx_poly(c: &[f64], w: f64) -> (f64, f64) {
    c.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, v)| {
        (re + v * cos(w * n as f64), im - v * sin(w * n as f64))
    })
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

pub fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * sqrt((1.0 - r * r).max(0.0))) / denom
        })
        .collect()
}

/// Kaiser β for a stopband attenuation in dB.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * libm::pow(atten_db - 21.0, 0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        sin(PI * x) / (PI * x)
    }
}

/// Kaiser-windowed-sinc low-pass with `len` taps (odd) and cutoff `cutoff_hz`,
/// scaled to unit DC gain.
pub fn lowpass_kaiser(len: usize, cutoff_hz: f64, fs: f64, beta: f64) -> Vec<f64> {
    assert!(len % 2 == 1, "symmetric type-I FIR needs odd length");
    let fc = cutoff_hz / fs;
    let mid = (len / 2) as f64;
    let win = kaiser_window(len, beta);
    let mut h: Vec<f64> = (0..len)
        .map(|n| 2.0 * fc * sinc(2.0 * fc * (n as f64 - mid)) * win[n])
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    h
}

/// Half-band low-pass (cutoff fs/4). Even offsets from the centre are
/// exactly zero and the centre tap is exactly 1/2, so `H(0) = 1` and
/// `H(fs/2) = 0` hold to rounding.
pub fn halfband_kaiser(len: usize, beta: f64) -> Vec<f64> {
    assert!(len % 4 == 3, "half-band length must be 4k+3");
    let mid = len / 2;
    let win = kaiser_window(len, beta);
    let mut h: Vec<f64> = (0..len)
        .map(|n| {
            let k = n as i64 - mid as i64;
            if k == 0 {
                0.5
            } else if k % 2 == 0 {
                0.0
            } else {
                0.5 * sinc(k as f64 / 2.0) * win[n]
            }
        })
        .collect();
    let side: f64 = h.iter().enumerate().filter(|(n, _)| *n != mid).map(|(_, v)| v).sum();
    h.iter_mut()
        .enumerate()
        .filter(|(n, _)| *n != mid)
        .for_each(|(_, v)| *v *= 0.5 / side);
    h
}

/// Distance from `f` to the nearest multiple of `fs`: where a tone at `f`
/// lands after sampling at `fs`.
pub fn fold(f: f64, fs: f64) -> f64 {
    (f - fs * libm::round(f / fs)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxcar_is_exact_mean() {
        let mut b = Boxcar::new(25);
        let mut out = Vec::new();
        for k in 0..100 {
            if let Some(y) = b.push(k as f64) {
                out.push(y);
            }
        }
        assert_eq!(out, [12.0, 37.0, 62.0, 87.0]);
        let mut c = Boxcar::new(25);
        for _ in 0..250 {
            if let Some(y) = c.push(0.1) {
                assert!((y - 0.1).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn designed_filters_have_unit_dc_gain() {
        let lp = lowpass_kaiser(41, 400.0, 5000.0, 7.9);
        assert!((lp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let hb = halfband_kaiser(11, 5.0);
        assert!((hb.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let bq = Biquad::butterworth_lowpass(50.0, 1000.0);
        assert!((bq.dc_gain() - 1.0).abs() < 1e-9);
        let op = OnePole::new(100.0, 10_000.0);
        assert!((one_pole_response(op.alpha(), 0.0, 10_000.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn halfband_nulls_nyquist() {
        let hb = halfband_kaiser(19, 6.0);
        assert!(fir_response(&hb, 5000.0, 10_000.0) < 1e-12);
        assert!((fir_response(&hb, 2500.0, 10_000.0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn butterworth_half_power_at_corner() {
        let bq = Biquad::butterworth_lowpass(50.0, 1000.0);
        let g = bq.response(50.0, 1000.0);
        assert!((g - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn fir_decimator_matches_direct_convolution() {
        let taps = vec![0.1, 0.2, 0.4, 0.2, 0.1];
        let mut d = FirDecimator::new(taps.clone(), 2);
        let x: Vec<f64> = (0..40).map(|k| libm::sin(k as f64 * 0.3)).collect();
        let mut got = Vec::new();
        for v in &x {
            if let Some(y) = d.push(*v) {
                got.push(y);
            }
        }
        // Output after input index 1, 3, 5, ...
        for (j, y) in got.iter().enumerate() {
            let n = 2 * j + 1;
            let want: f64 = (0..taps.len())
                .filter(|k| *k <= n)
                .map(|k| taps[k] * x[n - k])
                .sum();
            assert!((y - want).abs() < 1e-12);
        }
    }

    #[test]
    fn bessel_values() {
        assert_eq!(bessel_i0(0.0), 1.0);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-11);
    }

    #[test]
    fn fold_aliases() {
        assert_eq!(fold(15_000.0, 10_000.0), 5000.0);
        assert_eq!(fold(30_000.0, 10_000.0), 0.0);
        assert_eq!(fold(400.0, 1000.0), 400.0);
        assert_eq!(fold(700.0, 1000.0), 300.0);
    }
}
