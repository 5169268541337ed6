//! Scenario configuration: strict JSON, defaults, semantic validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::grid::Grid;
use crate::potential::Potential;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub system: SystemSpec,
    pub grid: GridSpec,
    #[serde(default = "free_potential")]
    pub potential: Potential,
    pub initial: InitialSpec,
    pub dynamics: DynamicsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Output directory for artifacts; the CLI flag and `EDLAB_OUT` are
    /// consulted when this is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
}

fn free_potential() -> Potential {
    Potential::Free
}

fn one() -> f64 {
    1.0
}

fn one_axis() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub masses: Vec<f64>,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default = "one_axis")]
    pub spatial_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: Vec<usize>,
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub density: DensitySpec,
    #[serde(default)]
    pub phase: PhaseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Gaussian { mean: Vec<f64>, sigma: Vec<f64> },
    Uniform,
    GroundState,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseSpec {
    #[default]
    Zero,
    /// `Φ = p·x`; the linear part is carried as a tilt on the periodic grid.
    PlaneWave { p: Vec<f64> },
    CustomTable { values: Vec<f64> },
}

/// Phase-scale constant `k`: a positive number or `"regraduated"` for
/// `k̂ = η/sqrt(8ξ)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum KSpec {
    Value(f64),
    #[default]
    Regraduated,
}

const REGRADUATED: &str = "regraduated";

impl Serialize for KSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            KSpec::Value(k) => s.serialize_f64(*k),
            KSpec::Regraduated => s.serialize_str(REGRADUATED),
        }
    }
}

impl<'de> Deserialize<'de> for KSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(k) => Ok(KSpec::Value(k)),
            Raw::Tag(t) if t == REGRADUATED => Ok(KSpec::Regraduated),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"{REGRADUATED}\", found \"{t}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    /// Defaults to `η²/8`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default)]
    pub k: KSpec,
    pub dt: f64,
    pub steps: usize,
    /// Defaults to `max(steps / 10, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_every: Option<usize>,
    /// Information-metric scale `C`; defaults to `ηΔt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

fn default_bins() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub walkers: usize,
    pub master_seed: u64,
    /// Histogram cells per axis.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Step sizes for the scaling sweep; defaults to `10Δt, Δt, Δt/10`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_dts: Option<Vec<f64>>,
}

/// Pass thresholds for every metric the experiments report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// `max |∫ρ - ∫ρ₀|`.
    pub norm_drift: f64,
    /// `max |H - H₀| / |H₀|`.
    pub hamiltonian_drift: f64,
    /// `max |P - P₀|` over axes, relative to the RMS momentum scale.
    pub momentum_drift: f64,
    /// L2 density gap between the flow and the wave solver.
    pub density_l2_gap: f64,
    /// L1 gap between walker histogram and grid density.
    pub histogram_l1: f64,
    /// Monte Carlo z-scores.
    pub z_score: f64,
    /// Half-width of the band around a fitted scaling exponent.
    pub exponent: f64,
    /// Relative error of the Fisher matrix of a Gaussian.
    pub fisher: f64,
    /// Relative gap between the quantum potential and a finite-difference
    /// functional derivative.
    pub functional_derivative: f64,
    /// Gap between the two algebraic forms of the quantum potential,
    /// relative to its largest magnitude.
    pub quantum_potential_forms: f64,
    /// Linear-versus-nonlinear gap at `k̂` and superposition defect.
    pub linearity: f64,
    /// `(ρ, Φ)` gap between runs at different `k`.
    pub k_equivalence: f64,
    /// Largest admissible distance of an accumulated winding from an
    /// integer.
    pub winding_distance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            norm_drift: 1e-9,
            hamiltonian_drift: 1e-6,
            momentum_drift: 1e-8,
            density_l2_gap: 1e-4,
            histogram_l1: 0.02,
            z_score: 3.0,
            exponent: 0.05,
            fisher: 1e-6,
            functional_derivative: 1e-4,
            quantum_potential_forms: 1e-8,
            linearity: 1e-8,
            k_equivalence: 1e-6,
            winding_distance: 1e-3,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 13] {
        [
            ("norm_drift", self.norm_drift),
            ("hamiltonian_drift", self.hamiltonian_drift),
            ("momentum_drift", self.momentum_drift),
            ("density_l2_gap", self.density_l2_gap),
            ("histogram_l1", self.histogram_l1),
            ("z_score", self.z_score),
            ("exponent", self.exponent),
            ("fisher", self.fisher),
            ("functional_derivative", self.functional_derivative),
            ("quantum_potential_forms", self.quantum_potential_forms),
            ("linearity", self.linearity),
            ("k_equivalence", self.k_equivalence),
            ("winding_distance", self.winding_distance),
        ]
    }
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Validation {
        path: path.into(),
        message: message.into(),
    }
}

fn positive(path: impl Into<String>, v: f64) -> Result<(), HarnessError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(path, format!("{v} is not strictly positive")))
    }
}

impl ScenarioConfig {
    /// Parses JSON text, then validates and fills defaults.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        raw.resolved()
    }

    /// Validated copy with every defaulted field made explicit.
    pub fn resolved(mut self) -> Result<Self, HarnessError> {
        self.validate()?;
        let eta = self.system.eta;
        let d = &mut self.dynamics;
        let xi = *d.xi.get_or_insert(eta * eta / 8.0);
        d.output_every.get_or_insert((d.steps / 10).max(1));
        d.c.get_or_insert(eta * d.dt);
        let dt = d.dt;
        if let Some(e) = &mut self.ensemble {
            e.sweep_dts.get_or_insert_with(|| vec![10.0 * dt, dt, 0.1 * dt]);
        }
        if matches!(self.dynamics.k, KSpec::Regraduated) && xi <= 0.0 {
            return Err(invalid("dynamics.k", "\"regraduated\" needs xi > 0"));
        }
        if matches!(self.initial.density, DensitySpec::GroundState) && xi <= 0.0 {
            return Err(invalid("initial.density", "a ground state needs xi > 0"));
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("configuration serializes");
        s.push('\n');
        s
    }

    /// Configuration-space dimension.
    pub fn dim(&self) -> usize {
        self.system.masses.len() * self.system.spatial_dim
    }

    pub fn xi(&self) -> f64 {
        self.dynamics.xi.unwrap_or(self.system.eta * self.system.eta / 8.0)
    }

    pub fn c(&self) -> f64 {
        self.dynamics.c.unwrap_or(self.system.eta * self.dynamics.dt)
    }

    pub fn output_every(&self) -> usize {
        self.dynamics.output_every.unwrap_or((self.dynamics.steps / 10).max(1))
    }

    /// `k̂ = η/sqrt(8ξ)`; `None` when `ξ = 0`.
    pub fn k_hat(&self) -> Option<f64> {
        let xi = self.xi();
        (xi > 0.0).then(|| self.system.eta / (8.0 * xi).sqrt())
    }

    /// The phase-scale constant in use.
    pub fn k(&self) -> f64 {
        match self.dynamics.k {
            KSpec::Value(k) => k,
            KSpec::Regraduated => self.k_hat().unwrap_or(f64::NAN),
        }
    }

    pub fn sweep_dts(&self) -> Vec<f64> {
        let dt = self.dynamics.dt;
        self.ensemble
            .as_ref()
            .and_then(|e| e.sweep_dts.clone())
            .unwrap_or_else(|| vec![10.0 * dt, dt, 0.1 * dt])
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        let sys = &self.system;
        if sys.masses.is_empty() {
            return Err(invalid("system.masses", "at least one particle is required"));
        }
        for (i, &m) in sys.masses.iter().enumerate() {
            positive(format!("system.masses[{i}]"), m)?;
        }
        positive("system.eta", sys.eta)?;
        if !(1..=3).contains(&sys.spatial_dim) {
            return Err(invalid("system.spatial_dim", format!("{} not in 1..=3", sys.spatial_dim)));
        }
        let dim = self.dim();
        if dim > 3 {
            return Err(invalid("system.masses", format!("configuration dimension {dim} exceeds the grid limit of 3")));
        }
        let g = &self.grid;
        if g.points.len() != dim {
            return Err(invalid("grid.points", format!("{} axes given, configuration dimension is {dim}", g.points.len())));
        }
        if g.lengths.len() != dim {
            return Err(invalid("grid.lengths", format!("{} axes given, configuration dimension is {dim}", g.lengths.len())));
        }
        for (i, &n) in g.points.iter().enumerate() {
            if n < 8 {
                return Err(invalid(format!("grid.points[{i}]"), format!("{n} is below the minimum of 8")));
            }
        }
        for (i, &l) in g.lengths.iter().enumerate() {
            positive(format!("grid.lengths[{i}]"), l)?;
        }
        let grid = self.build_grid()?;
        self.potential
            .validate(&grid)
            .map_err(|e| invalid("potential", e.to_string()))?;

        match &self.initial.density {
            DensitySpec::Gaussian { mean, sigma } => {
                if mean.len() != dim {
                    return Err(invalid("initial.density.mean", format!("{} entries for dimension {dim}", mean.len())));
                }
                if sigma.len() != dim {
                    return Err(invalid("initial.density.sigma", format!("{} entries for dimension {dim}", sigma.len())));
                }
                for (i, &m) in mean.iter().enumerate() {
                    if !m.is_finite() {
                        return Err(invalid(format!("initial.density.mean[{i}]"), "must be finite"));
                    }
                }
                for (i, &s) in sigma.iter().enumerate() {
                    positive(format!("initial.density.sigma[{i}]"), s)?;
                }
            }
            DensitySpec::Uniform => {}
            DensitySpec::GroundState => {
                if self.potential.is_free() {
                    return Err(invalid("initial.density", "a ground state needs a confining potential"));
                }
            }
        }
        match &self.initial.phase {
            PhaseSpec::Zero => {}
            PhaseSpec::PlaneWave { p } => {
                if p.len() != dim {
                    return Err(invalid("initial.phase.p", format!("{} entries for dimension {dim}", p.len())));
                }
                for (i, v) in p.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(invalid(format!("initial.phase.p[{i}]"), "must be finite"));
                    }
                }
            }
            PhaseSpec::CustomTable { values } => {
                if values.len() != grid.len() {
                    return Err(invalid(
                        "initial.phase.values",
                        format!("{} values for a grid of {} points", values.len(), grid.len()),
                    ));
                }
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(invalid(format!("initial.phase.values[{i}]"), "must be finite"));
                }
            }
        }

        let d = &self.dynamics;
        if let Some(xi) = d.xi {
            if !(xi.is_finite() && xi >= 0.0) {
                return Err(invalid("dynamics.xi", format!("{xi} must be non-negative")));
            }
        }
        if let KSpec::Value(k) = d.k {
            positive("dynamics.k", k)?;
        }
        positive("dynamics.dt", d.dt)?;
        if d.steps == 0 {
            return Err(invalid("dynamics.steps", "must be positive"));
        }
        if d.output_every == Some(0) {
            return Err(invalid("dynamics.output_every", "must be positive"));
        }
        if let Some(c) = d.c {
            positive("dynamics.c", c)?;
        }

        if let Some(e) = &self.ensemble {
            if e.walkers < crate::ensemble::MIN_HISTOGRAM_WALKERS {
                return Err(invalid(
                    "ensemble.walkers",
                    format!("{} is below the minimum of {}", e.walkers, crate::ensemble::MIN_HISTOGRAM_WALKERS),
                ));
            }
            if e.bins == 0 {
                return Err(invalid("ensemble.bins", "must be positive"));
            }
            for (i, &n) in g.points.iter().enumerate() {
                if n % e.bins != 0 {
                    return Err(invalid("ensemble.bins", format!("{} does not divide grid.points[{i}] = {n}", e.bins)));
                }
            }
            if let Some(dts) = &e.sweep_dts {
                if dts.len() < 2 {
                    return Err(invalid("ensemble.sweep_dts", "at least two step sizes are needed"));
                }
                for (i, &dt) in dts.iter().enumerate() {
                    positive(format!("ensemble.sweep_dts[{i}]"), dt)?;
                }
            }
        }

        for (name, v) in self.tolerances.entries() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("tolerances.{name}"), format!("{v} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid, HarnessError> {
        Grid::new(self.grid.points.clone(), self.grid.lengths.clone()).map_err(|e| invalid("grid", e.to_string()))
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::from_json(&text)
}
