//! Scenario results: metrics with their bounds, traces, and file output.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use gyrocond_core::TraceBuffer;

/// Acceptance window of a metric and the characterization row it comes
/// from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    pub row: String,
}

impl Bound {
    pub fn range(min: f64, max: f64, row: &str) -> Self {
        Self {
            min: Some(min),
            max: Some(max),
            row: row.to_string(),
        }
    }

    pub fn at_most(max: f64, row: &str) -> Self {
        Self {
            min: None,
            max: Some(max),
            row: row.to_string(),
        }
    }

    pub fn at_least(min: f64, row: &str) -> Self {
        Self {
            min: Some(min),
            max: None,
            row: row.to_string(),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && self.min.is_none_or(|m| v >= m) && self.max.is_none_or(|m| v <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub unit: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<Bound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    /// True iff every bounded metric is inside its bound.
    pub pass: bool,
    pub metrics: Vec<Metric>,
    /// Per-point tables and other scenario-specific detail.
    #[serde(skip_serializing_if = "Value::is_null", default)]
    pub details: Value,
}

impl MetricsReport {
    pub fn new(scenario: &str, seed: u64) -> Self {
        Self {
            scenario: scenario.to_string(),
            seed,
            pass: true,
            metrics: Vec::new(),
            details: Value::Null,
        }
    }

    /// Records an informational metric.
    pub fn info(&mut self, name: &str, value: f64, unit: &str) {
        self.metrics.push(Metric {
            name: name.to_string(),
            value,
            unit: unit.to_string(),
            bound: None,
            pass: None,
        });
    }

    /// Records a metric checked against `bound`.
    pub fn check(&mut self, name: &str, value: f64, unit: &str, bound: Bound) -> bool {
        let ok = bound.contains(value);
        self.pass &= ok;
        self.metrics.push(Metric {
            name: name.to_string(),
            value,
            unit: unit.to_string(),
            bound: Some(bound),
            pass: Some(ok),
        });
        ok
    }

    /// Records a failed precondition as a failing metric.
    pub fn fail(&mut self, name: &str) {
        self.pass = false;
        self.metrics.push(Metric {
            name: name.to_string(),
            value: f64::NAN,
            unit: String::new(),
            bound: None,
            pass: Some(false),
        });
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.metric(name).map(|m| m.value)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Everything a scenario produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub report: MetricsReport,
    pub traces: Vec<TraceBuffer>,
    /// Extra files, `(name, contents)`.
    pub artifacts: Vec<(String, String)>,
}

impl ScenarioOutput {
    pub fn new(report: MetricsReport) -> Self {
        Self {
            report,
            traces: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Writes `report.json`, one `<tap>.csv` per trace and the artifacts.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.report.to_json())?;
        for t in &self.traces {
            fs::write(dir.join(format!("{}.csv", t.tap.name())), trace_csv(t)?)?;
        }
        for (name, text) in &self.artifacts {
            fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

/// CSV rendering of a trace: every row carries the tap metadata, the
/// sample index, the raw 16-bit code and the decoded value.
pub fn trace_csv(t: &TraceBuffer) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["tap", "fs", "scale", "offset", "index", "code", "value"])?;
    let (tap, fs, scale, offset) = (
        t.tap.name(),
        t.fs.to_string(),
        t.scale.to_string(),
        t.offset.to_string(),
    );
    for (k, code) in t.codes.iter().enumerate() {
        w.write_record([
            tap,
            &fs,
            &scale,
            &offset,
            &k.to_string(),
            &code.to_string(),
            &t.value(k).to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error())
}
