//! Quadrature demodulation of the secondary pickoff.

use super::filters::{Boxcar, OnePole};

/// Mixes a centered sample with the reference: `(2·x·sin, 2·x·cos)`.
#[inline]
pub fn demod_iq(x: f64, sin: f64, cos: f64) -> (f64, f64) {
    (2.0 * x * sin, 2.0 * x * cos)
}

/// Mixer, integrate-and-dump to the mid rate and a one-pole smoothing
/// stage on each channel.
#[derive(Debug, Clone)]
pub struct Demodulator {
    box_i: Boxcar,
    box_q: Boxcar,
    lp_i: OnePole,
    lp_q: OnePole,
    fs_mid: f64,
}

impl Demodulator {
    pub fn new(factor: usize, fs_fast: f64, corner_hz: f64) -> Self {
        let fs_mid = fs_fast / factor as f64;
        Self {
            box_i: Boxcar::new(factor),
            box_q: Boxcar::new(factor),
            lp_i: OnePole::new(corner_hz, fs_mid),
            lp_q: OnePole::new(corner_hz, fs_mid),
            fs_mid,
        }
    }

    pub fn set_corner(&mut self, corner_hz: f64) {
        self.lp_i.set_corner(corner_hz, self.fs_mid);
        self.lp_q.set_corner(corner_hz, self.fs_mid);
    }

    /// Returns `(i, q)` at the mid rate once per `factor` inputs.
    #[inline]
    pub fn push(&mut self, x: f64, sin: f64, cos: f64) -> Option<(f64, f64)> {
        let (i, q) = demod_iq(x, sin, cos);
        let bi = self.box_i.push(i);
        let bq = self.box_q.push(q);
        match (bi, bq) {
            (Some(i), Some(q)) => Some((self.lp_i.process(i), self.lp_q.process(q))),
            _ => None,
        }
    }

    pub fn output(&self) -> (f64, f64) {
        (self.lp_i.output(), self.lp_q.output())
    }

    pub fn smoothing(&self) -> &OnePole {
        &self.lp_i
    }
}
