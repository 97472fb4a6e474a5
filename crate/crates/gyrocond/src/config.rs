//! Scenario configuration files.
//!
//! A configuration names the scenario, the mandatory seed and optional
//! overrides. Model and chain overrides are JSON objects merged onto the
//! calibrated defaults; every key must already exist there.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use gyrocond_core::dsp::chain::LoopMode;
use gyrocond_core::{ChainConfig, GyroParams, SimConfig, REFERENCE_TEMP};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown override key `{0}`")]
    UnknownKey(String),
    #[error("override `{key}` expects an object")]
    NotObject { key: String },
    #[error("invalid override: {0}")]
    Invalid(#[from] serde_json::Error),
    #[error("{0}")]
    Param(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Lock,
    Linearity,
    Noise,
    Bandwidth,
    TempSweep,
    Suppression,
    Calibrate,
    Stimulus,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::Lock,
        ScenarioKind::Linearity,
        ScenarioKind::Noise,
        ScenarioKind::Bandwidth,
        ScenarioKind::TempSweep,
        ScenarioKind::Suppression,
        ScenarioKind::Calibrate,
        ScenarioKind::Stimulus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Lock => "lock",
            ScenarioKind::Linearity => "linearity",
            ScenarioKind::Noise => "noise",
            ScenarioKind::Bandwidth => "bandwidth",
            ScenarioKind::TempSweep => "temp_sweep",
            ScenarioKind::Suppression => "suppression",
            ScenarioKind::Calibrate => "calibrate",
            ScenarioKind::Stimulus => "stimulus",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }
}

/// Rate and temperature applied over time by the `stimulus` scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stimulus {
    ConstantRate {
        dps: f64,
    },
    RateStep {
        from_dps: f64,
        to_dps: f64,
        at_s: f64,
    },
    RateSine {
        amplitude_dps: f64,
        freq_hz: f64,
    },
    RateStaircase {
        levels_dps: Vec<f64>,
        dwell_s: f64,
    },
    /// Piecewise-linear temperature over `(time s, °C)` points at zero rate.
    TemperatureProfile {
        points: Vec<(f64, f64)>,
    },
}

impl Stimulus {
    /// Rate at time `t` since the stimulus started, °/s.
    pub fn rate_at(&self, t: f64) -> f64 {
        match self {
            Stimulus::ConstantRate { dps } => *dps,
            Stimulus::RateStep {
                from_dps,
                to_dps,
                at_s,
            } => {
                if t < *at_s {
                    *from_dps
                } else {
                    *to_dps
                }
            }
            Stimulus::RateSine {
                amplitude_dps,
                freq_hz,
            } => amplitude_dps * (std::f64::consts::TAU * freq_hz * t).sin(),
            Stimulus::RateStaircase { levels_dps, dwell_s } => {
                if levels_dps.is_empty() {
                    return 0.0;
                }
                let k = ((t / dwell_s).floor() as usize).min(levels_dps.len() - 1);
                levels_dps[k]
            }
            Stimulus::TemperatureProfile { .. } => 0.0,
        }
    }

    /// Temperature at time `t`, if the stimulus defines one.
    pub fn temperature_at(&self, t: f64) -> Option<f64> {
        let Stimulus::TemperatureProfile { points } = self else {
            return None;
        };
        let first = points.first()?;
        if t <= first.0 {
            return Some(first.1);
        }
        for w in points.windows(2) {
            let ((t0, c0), (t1, c1)) = (w[0], w[1]);
            if t <= t1 {
                let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                return Some(c0 + f * (c1 - c0));
            }
        }
        points.last().map(|p| p.1)
    }

    /// Natural length of the stimulus, s.
    pub fn natural_duration(&self) -> Option<f64> {
        match self {
            Stimulus::RateStaircase { levels_dps, dwell_s } => {
                Some(levels_dps.len() as f64 * dwell_s)
            }
            Stimulus::TemperatureProfile { points } => points.last().map(|p| p.0),
            _ => None,
        }
    }
}

/// Scenario-specific settings; each scenario reads the ones it uses and
/// falls back to its own default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub range_dps: Option<f64>,
    pub n_points: Option<usize>,
    pub dwell_s: Option<f64>,
    pub settle_s: Option<f64>,
    pub freqs_hz: Option<Vec<f64>>,
    pub amplitude_dps: Option<f64>,
    pub rate_dps: Option<f64>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub t_step: Option<f64>,
    pub compensation: Option<bool>,
    pub temperatures: Option<Vec<f64>>,
    pub noise_target: Option<f64>,
    pub noise_iterations: Option<usize>,
    pub calibrate_noise: Option<bool>,
    pub segment_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    /// Die temperature, °C.
    #[serde(default = "reference_temp")]
    pub temperature: f64,
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub gyro: Map<String, Value>,
    #[serde(default)]
    pub chain: Map<String, Value>,
    #[serde(default)]
    pub stimulus: Option<Stimulus>,
    #[serde(default)]
    pub params: ScenarioParams,
}

fn reference_temp() -> f64 {
    REFERENCE_TEMP
}

impl ScenarioConfig {
    pub fn new(scenario: ScenarioKind, seed: u64) -> Self {
        Self {
            scenario,
            seed,
            temperature: REFERENCE_TEMP,
            duration_s: None,
            gyro: Map::new(),
            chain: Map::new(),
            stimulus: None,
            params: ScenarioParams::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builder helper for chain overrides.
    pub fn with_chain(mut self, key: &str, value: Value) -> Self {
        self.chain.insert(key.to_string(), value);
        self
    }

    /// Builder helper for model overrides.
    pub fn with_gyro(mut self, key: &str, value: Value) -> Self {
        self.gyro.insert(key.to_string(), value);
        self
    }

    pub fn gyro_params(&self) -> Result<GyroParams, ConfigError> {
        patched(&GyroParams::default(), &self.gyro)
    }

    /// Chain configuration after overrides. Unless the overrides set the
    /// compensation themselves, the calibrated trim of the resolved loop
    /// mode is used.
    pub fn chain_config(&self) -> Result<ChainConfig, ConfigError> {
        let mut cfg: ChainConfig = patched(&ChainConfig::default(), &self.chain)?;
        if !self.chain.contains_key("compensation") {
            cfg.compensation = ChainConfig::calibrated(cfg.mode).compensation;
        }
        Ok(cfg)
    }

    pub fn mode(&self) -> Result<LoopMode, ConfigError> {
        Ok(self.chain_config()?.mode)
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        Ok(SimConfig {
            gyro: self.gyro_params()?,
            chain: self.chain_config()?,
            seed: self.seed,
            temperature: self.temperature,
        })
    }
}

/// Serializes `base`, merges `patch` into it and deserializes the result.
pub fn patched<T>(base: &T, patch: &Map<String, Value>) -> Result<T, ConfigError>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut value = serde_json::to_value(base)?;
    merge(&mut value, patch, "")?;
    Ok(serde_json::from_value(value)?)
}

fn merge(base: &mut Value, patch: &Map<String, Value>, path: &str) -> Result<(), ConfigError> {
    let Value::Object(obj) = base else {
        return Err(ConfigError::NotObject {
            key: path.to_string(),
        });
    };
    for (k, v) in patch {
        let key = if path.is_empty() {
            k.clone()
        } else {
            format!("{path}.{k}")
        };
        let slot = obj
            .get_mut(k)
            .ok_or_else(|| ConfigError::UnknownKey(key.clone()))?;
        match (slot.is_object(), v) {
            (true, Value::Object(inner)) => merge(slot, inner, &key)?,
            _ => *slot = v.clone(),
        }
    }
    Ok(())
}
