//! Analysis used by the scenarios: Welch PSD, least-squares line and
//! single-tone fits.

use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("segment length {segment} needs at least {needed} samples, got {got}")]
    TooShort {
        segment: usize,
        needed: usize,
        got: usize,
    },
    #[error("bad segmentation: {0}")]
    Segmentation(&'static str),
    #[error("line fit needs at least two distinct x values")]
    DegenerateX,
    #[error("tone fit is singular at {0} Hz")]
    SingularTone(f64),
}

/// One-sided power spectral density, units²/Hz, on bins `k·fs/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub fs: f64,
    pub segment_len: usize,
    pub segments: usize,
    pub freqs: Vec<f64>,
    pub density: Vec<f64>,
}

impl Psd {
    pub fn bin_width(&self) -> f64 {
        self.fs / self.segment_len as f64
    }

    /// ∫PSD df over all bins.
    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }

    /// Mean of √PSD over bins with `lo ≤ f ≤ hi`.
    pub fn mean_amplitude_density(&self, lo: f64, hi: f64) -> f64 {
        let band: Vec<f64> = self
            .freqs
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p.sqrt())
            .collect();
        band.iter().sum::<f64>() / band.len().max(1) as f64
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (TAU * k as f64 / n as f64).cos())
        .collect()
}

/// Hann-windowed averaged periodogram with fractional `overlap`; each
/// segment has its mean removed before windowing.
pub fn welch_psd(
    samples: &[f64],
    fs: f64,
    segment_len: usize,
    overlap: f64,
) -> Result<Psd, AnalysisError> {
    if segment_len < 2 {
        return Err(AnalysisError::Segmentation("segment length below 2"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(AnalysisError::Segmentation("overlap outside [0, 1)"));
    }
    if !(fs > 0.0) {
        return Err(AnalysisError::Segmentation("sample rate must be positive"));
    }
    if samples.len() < 2 * segment_len {
        return Err(AnalysisError::TooShort {
            segment: segment_len,
            needed: 2 * segment_len,
            got: samples.len(),
        });
    }
    let step = ((segment_len as f64 * (1.0 - overlap)).round() as usize).max(1);
    let window = hann(segment_len);
    let wpow: f64 = window.iter().map(|w| w * w).sum();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(segment_len);
    let nbins = segment_len / 2 + 1;
    let mut acc = vec![0.0; nbins];
    let mut buf = vec![Complex::new(0.0, 0.0); segment_len];
    let mut segments = 0;
    let mut start = 0;
    while start + segment_len <= samples.len() {
        let seg = &samples[start..start + segment_len];
        let mean = seg.iter().sum::<f64>() / segment_len as f64;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (fs * wpow * segments as f64);
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = if k == 0 || (segment_len.is_multiple_of(2) && k == nbins - 1) {
                1.0
            } else {
                2.0
            };
            p * scale * one_sided
        })
        .collect();
    let freqs = (0..nbins)
        .map(|k| k as f64 * fs / segment_len as f64)
        .collect();
    Ok(Psd {
        fs,
        segment_len,
        segments,
        freqs,
        density,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_abs_residual: f64,
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit, AnalysisError> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return Err(AnalysisError::DegenerateX);
    }
    let (xs, ys) = (&xs[..n], &ys[..n]);
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(AnalysisError::DegenerateX);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_abs_residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    Ok(LineFit {
        slope,
        intercept,
        max_abs_residual,
    })
}

/// Least-squares fit of `c + a·sin(2πft) + b·cos(2πft)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneFit {
    pub mean: f64,
    pub sin: f64,
    pub cos: f64,
}

impl ToneFit {
    pub fn amplitude(&self) -> f64 {
        self.sin.hypot(self.cos)
    }

    /// Phase of the fitted tone relative to `sin(2πft)`, rad.
    pub fn phase(&self) -> f64 {
        self.cos.atan2(self.sin)
    }
}

pub fn fit_tone(samples: &[f64], fs: f64, freq: f64) -> Result<ToneFit, AnalysisError> {
    // Normal equations for the three basis functions.
    let mut m = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    for (k, y) in samples.iter().enumerate() {
        let ph = TAU * freq * k as f64 / fs;
        let basis = [1.0, ph.sin(), ph.cos()];
        for i in 0..3 {
            r[i] += basis[i] * y;
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
        }
    }
    let sol = solve3(m, r).ok_or(AnalysisError::SingularTone(freq))?;
    Ok(ToneFit {
        mean: sol[0],
        sin: sol[1],
        cos: sol[2],
    })
}

/// Least-squares `c0 + c1·x + c2·x²` (exact through three distinct points).
pub fn fit_quadratic(xs: &[f64], ys: &[f64]) -> Result<[f64; 3], AnalysisError> {
    let mut m = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    for (x, y) in xs.iter().zip(ys) {
        let basis = [1.0, *x, x * x];
        for i in 0..3 {
            r[i] += basis[i] * y;
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
        }
    }
    solve3(m, r).ok_or(AnalysisError::DegenerateX)
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let d = det3(&m);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if !(d.abs() > 1e-12 * scale * scale * scale) {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = r[row];
        }
        *o = det3(&mc) / d;
    }
    Some(out)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len().max(1) as f64).sqrt()
}

/// Converts an amplitude ratio to dB.
pub fn db(ratio: f64) -> f64 {
    20.0 * ratio.log10()
}

/// Linear interpolation of the first downward crossing of `level` in
/// `(x, y)` pairs sorted by x.
pub fn crossing(xs: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    for k in 1..xs.len().min(ys.len()) {
        let (y0, y1) = (ys[k - 1], ys[k]);
        if y0 >= level && y1 < level {
            let t = (y0 - level) / (y0 - y1);
            return Some(xs[k - 1] + t * (xs[k] - xs[k - 1]));
        }
    }
    None
}
