//! Run reports and their deterministic serialization.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::config::ScenarioConfig;
use super::{Experiment, HarnessError};

pub const REPORT_SCHEMA: &str = "edlab.report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// One measured quantity. Without a target the metric passes when
/// `value <= tolerance`; with one it passes when
/// `|value - target| <= tolerance`. Non-finite values always fail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl Metric {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self::build(name, value, None, tolerance)
    }

    pub fn near(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self::build(name, value, Some(target), tolerance)
    }

    fn build(name: &str, value: f64, target: Option<f64>, tolerance: f64) -> Self {
        let gap = match target {
            Some(t) => (value - t).abs(),
            None => value,
        };
        let verdict = if gap.is_finite() && gap <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            name: name.to_string(),
            value,
            target,
            tolerance,
            verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub version: &'static str,
    pub scenario: String,
    pub experiment: Experiment,
    pub seed: u64,
    /// Derived run constants such as `k`, `k̂` and `ħ`.
    pub parameters: BTreeMap<String, f64>,
    pub metrics: Vec<Metric>,
    /// File names, relative to the run directory.
    pub artifacts: Vec<String>,
    pub verdict: Verdict,
    /// Effective configuration with defaults filled.
    pub config: ScenarioConfig,
}

impl RunReport {
    pub fn new(
        config: &ScenarioConfig,
        experiment: Experiment,
        seed: u64,
        parameters: BTreeMap<String, f64>,
        metrics: Vec<Metric>,
        artifacts: Vec<String>,
    ) -> Result<Self, HarnessError> {
        if metrics.is_empty() {
            return Err(HarnessError::Validation {
                path: "experiment".into(),
                message: format!("{} produced no metrics", experiment.name()),
            });
        }
        let verdict = if metrics.iter().all(|m| m.verdict == Verdict::Pass) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Ok(Self {
            schema: REPORT_SCHEMA,
            version: env!("CARGO_PKG_VERSION"),
            scenario: config.name.clone(),
            experiment,
            seed,
            parameters,
            metrics,
            artifacts,
            verdict,
            config: config.clone(),
        })
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// 0 when every metric passes, 5 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            5
        }
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            other => Err(format!("unknown report format `{other}` (expected json or text)")),
        }
    }
}

pub fn emit_report(report: &RunReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::Text => text(report).into_bytes(),
    }
}

fn text(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "schema      {}", r.schema);
    let _ = writeln!(s, "version     {}", r.version);
    let _ = writeln!(s, "scenario    {}", r.scenario);
    let _ = writeln!(s, "experiment  {}", r.experiment.name());
    let _ = writeln!(s, "seed        {}", r.seed);
    for (k, v) in &r.parameters {
        let _ = writeln!(s, "param       {k} = {v:.12e}");
    }
    let width = r.metrics.iter().map(|m| m.name.len()).max().unwrap_or(0);
    for m in &r.metrics {
        let bound = match m.target {
            Some(t) => format!("{t:.6e} +- {:.3e}", m.tolerance),
            None => format!("<= {:.3e}", m.tolerance),
        };
        let _ = writeln!(
            s,
            "metric      {:<width$}  {:>14.6e}  {:<26}  {}",
            m.name,
            m.value,
            bound,
            m.verdict.as_str()
        );
    }
    for a in &r.artifacts {
        let _ = writeln!(s, "artifact    {a}");
    }
    let _ = writeln!(s, "verdict     {}", r.verdict.as_str());
    s
}
