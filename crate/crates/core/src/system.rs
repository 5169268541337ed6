//! Particle systems and the configuration-space index convention.
//!
//! A configuration-space axis `A` flattens the pair (particle `n`, spatial
//! axis `a`) as `A = n * spatial_dim + a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    masses: Vec<f64>,
    eta: f64,
    spatial_dim: usize,
}

impl ParticleSystem {
    pub fn new(masses: Vec<f64>, eta: f64, spatial_dim: usize) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::invalid("masses", "at least one particle is required"));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::invalid("masses", format!("mass {m} is not strictly positive")));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::invalid("eta", format!("{eta} is not strictly positive")));
        }
        if !(1..=3).contains(&spatial_dim) {
            return Err(Error::invalid("spatial_dim", format!("{spatial_dim} not in 1..=3")));
        }
        Ok(Self {
            masses,
            eta,
            spatial_dim,
        })
    }

    /// One particle of mass `mass` in one dimension.
    pub fn single(mass: f64, eta: f64) -> Result<Self> {
        Self::new(vec![mass], eta, 1)
    }

    pub fn n_particles(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    /// Configuration-space dimension `D = N * d`.
    pub fn config_dim(&self) -> usize {
        self.masses.len() * self.spatial_dim
    }

    /// Particle index owning configuration axis `axis`.
    pub fn particle_of(&self, axis: usize) -> usize {
        axis / self.spatial_dim
    }

    /// Diagonal entry `m_AA` of the mass tensor.
    pub fn axis_mass(&self, axis: usize) -> f64 {
        self.masses[self.particle_of(axis)]
    }

    /// Diagonal entry `m^AA` of the diffusion tensor.
    pub fn inverse_mass(&self, axis: usize) -> f64 {
        1.0 / self.axis_mass(axis)
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(self.masses.clone(), eta, self.spatial_dim)
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.config_dim() {
            return Err(Error::DimensionMismatch(format!(
                "system has configuration dimension {}, field has {dim}",
                self.config_dim()
            )));
        }
        Ok(())
    }
}
