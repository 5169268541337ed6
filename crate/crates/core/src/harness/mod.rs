//! Scenario configuration, experiment orchestration and report emission.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 parse error, 3 validation error,
//! 4 numerical breakdown, 5 tolerance failure.

mod config;
mod experiments;
mod report;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{
    load_config, DensitySpec, DynamicsSpec, EnsembleSpec, GridSpec, InitialSpec, KSpec, PhaseSpec, ScenarioConfig,
    SystemSpec, Tolerances,
};
pub use experiments::run_experiment;
pub use report::{emit_report, Metric, ReportFormat, RunReport, Verdict, REPORT_SCHEMA};

use crate::error::Error;

/// Environment variable naming the fallback output directory.
pub const OUT_ENV: &str = "EDLAB_OUT";
/// Output directory used when neither flag, config nor environment name one.
pub const DEFAULT_OUT_DIR: &str = "edlab-out";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("invalid configuration at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("numerical breakdown{}: {message}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numeric { step: Option<usize>, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io { .. } => 1,
            HarnessError::Parse { .. } => 2,
            HarnessError::Validation { .. } => 3,
            HarnessError::Numeric { .. } => 4,
        }
    }

    /// Maps a library error raised while running `experiment`.
    pub(crate) fn from_core(err: Error, experiment: Experiment) -> Self {
        match err {
            Error::Divergence { step } => HarnessError::Numeric {
                step: Some(step),
                message: err.to_string(),
            },
            Error::NonFinite(_)
            | Error::NegativeDensity { .. }
            | Error::UnderResolved { .. }
            | Error::NotNormalized { .. }
            | Error::PhaseUnderResolved { .. }
            | Error::TooManyNodes { .. } => HarnessError::Numeric {
                step: None,
                message: err.to_string(),
            },
            other => HarnessError::Validation {
                path: experiment.name().to_string(),
                message: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Equivalence,
    StochasticVsFp,
    Conservation,
    ScalingSweep,
    Infogeo,
    Regraduation,
    Winding,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Equivalence,
        Experiment::StochasticVsFp,
        Experiment::Conservation,
        Experiment::ScalingSweep,
        Experiment::Infogeo,
        Experiment::Regraduation,
        Experiment::Winding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Equivalence => "equivalence",
            Experiment::StochasticVsFp => "stochastic-vs-fp",
            Experiment::Conservation => "conservation",
            Experiment::ScalingSweep => "scaling-sweep",
            Experiment::Infogeo => "infogeo",
            Experiment::Regraduation => "regraduation",
            Experiment::Winding => "winding",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::Equivalence => "(rho, Phi) Hamilton flow against the Schrodinger solver from the same initial data",
            Experiment::StochasticVsFp => "coupled walker ensemble histogram against the grid density",
            Experiment::Conservation => "norm, ensemble Hamiltonian and momentum drift along the flow",
            Experiment::ScalingSweep => "one-step drift and fluctuation scaling with the step size",
            Experiment::Infogeo => "information metric, Fisher matrix and quantum potential checks",
            Experiment::Regraduation => "linearity at k_hat and equivalence of different k",
            Experiment::Winding => "integer phase winding on the ring and its conservation",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// A named text artifact produced by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Report plus the artifacts it lists. Nothing is written to disk until
/// [`Run::write`] is called.
#[derive(Debug, Clone)]
pub struct Run {
    pub report: RunReport,
    pub artifacts: Vec<Artifact>,
}

impl Run {
    /// Writes `report.json`, `config.json` and the artifacts into
    /// `<root>/<scenario>-<experiment>/` and returns that directory.
    pub fn write(&self, root: &Path) -> Result<PathBuf, HarnessError> {
        let dir = root.join(format!("{}-{}", sanitize(&self.report.scenario), self.report.experiment.name()));
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| HarnessError::Io { path, source }
        };
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let mut files = vec![
            ("report.json".to_string(), emit_report(&self.report, ReportFormat::Json)),
            ("config.json".to_string(), self.report.config.to_json().into_bytes()),
        ];
        files.extend(self.artifacts.iter().map(|a| (a.name.clone(), a.contents.clone().into_bytes())));
        for (name, bytes) in files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(io(&path))?;
        }
        Ok(dir)
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Output directory: the explicit flag, then the config's `outputs`, then
/// `EDLAB_OUT`, then [`DEFAULT_OUT_DIR`].
pub fn resolve_output_dir(flag: Option<&Path>, config: &ScenarioConfig, env: Option<&str>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.outputs.clone())
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}
