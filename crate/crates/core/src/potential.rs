//! External scalar potentials `V(x)` on configuration space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::system::ParticleSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Free,
    /// `Σ_A ½ m_A ω_A² x_A²`; `omega` holds one frequency per axis, or a
    /// single frequency shared by all axes.
    Harmonic { omega: Vec<f64> },
    /// Gaussian bump of the given height and width centered at `center` on
    /// configuration axis 0.
    Barrier { height: f64, width: f64, center: f64 },
    /// Quartic double well along axis 0 with minima at `±separation/2` and a
    /// central barrier of height `depth`.
    DoubleWell { separation: f64, depth: f64 },
    /// Tabulated values, one per grid point.
    Table { values: Vec<f64> },
}

impl Potential {
    pub fn harmonic(omega: f64) -> Self {
        Potential::Harmonic { omega: vec![omega] }
    }

    pub fn is_free(&self) -> bool {
        matches!(self, Potential::Free)
    }

    /// Frequency of axis `axis` for the harmonic kind.
    pub fn omega(&self, axis: usize) -> Option<f64> {
        match self {
            Potential::Harmonic { omega } if omega.len() == 1 => Some(omega[0]),
            Potential::Harmonic { omega } => omega.get(axis).copied(),
            _ => None,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        match self {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega } => {
                if omega.len() != 1 && omega.len() != grid.dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} harmonic frequencies for {} axes",
                        omega.len(),
                        grid.dim()
                    )));
                }
                if omega.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::invalid("omega", "frequencies must be positive"));
                }
                Ok(())
            }
            Potential::Barrier { height, width, center } => {
                if !(height.is_finite() && center.is_finite() && width.is_finite() && *width > 0.0)
                {
                    return Err(Error::invalid("barrier", "needs finite height/center and width > 0"));
                }
                Ok(())
            }
            Potential::DoubleWell { separation, depth } => {
                if !(separation.is_finite() && *separation > 0.0 && depth.is_finite()) {
                    return Err(Error::invalid("double_well", "needs separation > 0 and finite depth"));
                }
                Ok(())
            }
            Potential::Table { values } => {
                if values.len() != grid.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "potential table has {} values for {} grid points",
                        values.len(),
                        grid.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("potential table"));
                }
                Ok(())
            }
        }
    }

    /// Samples the potential on `grid`.
    pub fn evaluate(&self, grid: &Grid, system: &ParticleSystem) -> Result<GridField> {
        system.check_dim(grid.dim())?;
        self.validate(grid)?;
        match self {
            Potential::Free => Ok(GridField::zeros(grid)),
            Potential::Harmonic { .. } => GridField::from_fn(grid, |x| {
                x.iter()
                    .enumerate()
                    .map(|(a, &xa)| {
                        let w = self.omega(a).unwrap_or(0.0);
                        0.5 * system.axis_mass(a) * w * w * xa * xa
                    })
                    .sum()
            }),
            Potential::Barrier { height, width, center } => GridField::from_fn(grid, |x| {
                let z = (x[0] - center) / width;
                height * (-0.5 * z * z).exp()
            }),
            Potential::DoubleWell { separation, depth } => GridField::from_fn(grid, |x| {
                let a2 = 0.25 * separation * separation;
                let q = (x[0] * x[0] - a2) / a2;
                depth * q * q
            }),
            Potential::Table { values } => GridField::new(grid.clone(), values.clone()),
        }
    }
}
