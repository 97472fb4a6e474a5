/// Per-sample PI controller with output clamp and conditional-integration
/// anti-windup.
///
/// While the output sits on a clamp the integrator only accepts updates that
/// pull it back toward the linear range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiController {
    pub kp: f64,
    pub ki: f64,
    pub lo: f64,
    pub hi: f64,
    integrator: f64,
    output: f64,
    clamped: bool,
}

impl PiController {
    pub fn new(kp: f64, ki: f64, lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Self {
            kp,
            ki,
            lo,
            hi,
            integrator: 0.0,
            output: 0.0,
            clamped: false,
        }
    }

    /// A loop with both gains zero cannot act.
    pub fn is_active(&self) -> bool {
        self.kp != 0.0 || self.ki != 0.0
    }

    #[inline]
    pub fn update(&mut self, error: f64) -> f64 {
        let step = self.ki * error;
        let trial = self.integrator + step;
        let raw = self.kp * error + trial;
        let out = raw.clamp(self.lo, self.hi);
        let clamped = out != raw;
        let winding = (raw > self.hi && step > 0.0) || (raw < self.lo && step < 0.0);
        if !winding {
            self.integrator = trial;
        }
        self.output = out;
        self.clamped = clamped;
        out
    }

    pub fn output(&self) -> f64 {
        self.output
    }

    pub fn integrator(&self) -> f64 {
        self.integrator
    }

    pub fn is_clamped(&self) -> bool {
        self.clamped
    }

    /// Presets the integrator (bumpless hand-over) and the held output.
    pub fn preset(&mut self, value: f64) {
        self.integrator = value.clamp(self.lo, self.hi);
        self.output = self.integrator;
        self.clamped = false;
    }

    pub fn reset(&mut self) {
        self.preset(0.0_f64.clamp(self.lo, self.hi));
    }

    pub fn set_gains(&mut self, kp: f64, ki: f64) {
        self.kp = kp;
        self.ki = ki;
    }

    pub fn set_limits(&mut self, lo: f64, hi: f64) {
        self.lo = lo;
        self.hi = hi;
        self.integrator = self.integrator.clamp(lo, hi);
    }
}
