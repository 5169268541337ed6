//! Entropic dynamics on a periodic configuration-space grid.
//!
//! Particles follow Brownian-like paths whose single-step transition
//! probabilities come from maximum entropy. The drift potential is promoted to
//! a dynamical field conjugate to the density; their joint evolution is a
//! Hamiltonian flow which, after regraduation, is the Schrödinger equation.

pub mod ensemble;
pub mod error;
pub mod flow;
pub mod grid;
pub mod harness;
pub mod infogeo;
pub mod maxent;
pub mod ops;
pub mod potential;
pub mod system;
pub mod wave;

pub use ensemble::{MomentReport, WalkerEnsemble};
pub use error::{Error, Result};
pub use flow::{CanonicalState, Flow};
pub use grid::{Grid, GridField, WaveField};
pub use maxent::{DriftPotential, TransitionKernel};
pub use potential::Potential;
pub use system::ParticleSystem;
pub use wave::{Regraduation, SchrodingerSolver};

/// Tolerance on `|∫ρ - 1|` for inputs that must be normalized densities.
pub const NORM_TOL: f64 = 1e-8;
