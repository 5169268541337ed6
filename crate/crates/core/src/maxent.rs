//! Single-step maximum-entropy transition kernel.
//!
//! Maximizing `-∫ P log(P/Q)` with a uniform prior under per-particle
//! second-moment constraints and a drift constraint along `∇φ` yields a
//! Gaussian. With the multipliers fixed at `α_n = m_n / (ηΔt)` and the drift
//! multiplier absorbed into `φ`, each axis `A` of particle `n` has
//!
//! ```text
//! mean      ⟨Δx_A⟩ = (ηΔt / m_n) ∂_A φ
//! variance  ⟨Δw_A Δw_A⟩ = ηΔt / m_n
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::ops;
use crate::system::ParticleSystem;

/// Dense Chapman–Kolmogorov quadrature is refused above this many points.
pub const CK_POINT_LIMIT: usize = 1 << 12;

/// Drift potential `φ(x) = tilt · x + φ_periodic(x)`.
///
/// The tilt carries the non-periodic part of `φ`, so a potential whose
/// gradient is constant (or which winds around the box) is representable on
/// a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftPotential {
    pub periodic: GridField,
    pub tilt: Vec<f64>,
}

impl DriftPotential {
    pub fn periodic(phi: GridField) -> Self {
        let tilt = vec![0.0; phi.grid().dim()];
        Self { periodic: phi, tilt }
    }

    pub fn linear(grid: &Grid, tilt: Vec<f64>) -> Self {
        Self {
            periodic: GridField::zeros(grid),
            tilt,
        }
    }

    /// `∂_A φ` on the grid.
    pub fn gradient(&self, axis: usize) -> Result<GridField> {
        Ok(ops::gradient(&self.periodic, axis)?.map(|g| g + self.tilt[axis]))
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        let g = self.periodic.grid();
        g.interpolate(self.periodic.values(), x)
            + self.tilt.iter().zip(x).map(|(t, xa)| t * xa).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    system: ParticleSystem,
    grid: Grid,
    dt: f64,
    grad_phi: Vec<GridField>,
    mean: Vec<GridField>,
    variance: Vec<f64>,
}

/// Constraint values implied by a kernel at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMoments {
    /// `κ_n = ⟨Δx_n · Δx_n⟩`, one per particle.
    pub kappa: Vec<f64>,
    /// `κ' = Σ_A ⟨Δx_A⟩ ∂_A φ`.
    pub kappa_prime: f64,
}

/// Output of one Chapman–Kolmogorov step.
#[derive(Debug, Clone, PartialEq)]
pub struct CkStep {
    pub rho: GridField,
    /// `∫ρ' - ∫ρ` before renormalization.
    pub norm_deviation: f64,
}

/// Builds the kernel for a periodic drift potential.
pub fn build_kernel(system: &ParticleSystem, phi: &GridField, dt: f64) -> Result<TransitionKernel> {
    TransitionKernel::new(system, &DriftPotential::periodic(phi.clone()), dt)
}

impl TransitionKernel {
    pub fn new(system: &ParticleSystem, phi: &DriftPotential, dt: f64) -> Result<Self> {
        let grid = phi.periodic.grid();
        system.check_dim(grid.dim())?;
        if phi.tilt.len() != grid.dim() {
            return Err(Error::DimensionMismatch(format!(
                "tilt has {} components for a {}-dimensional grid",
                phi.tilt.len(),
                grid.dim()
            )));
        }
        let grad_phi = (0..grid.dim())
            .map(|a| phi.gradient(a))
            .collect::<Result<Vec<_>>>()?;
        Self::from_gradient(system, grad_phi, dt)
    }

    /// Kernel whose drift velocity `b_A = η m^{AA} ∂_A φ` is given directly.
    pub fn from_drift_velocity(system: &ParticleSystem, drift: Vec<GridField>, dt: f64) -> Result<Self> {
        let grad_phi = drift
            .into_iter()
            .enumerate()
            .map(|(a, b)| b.scale(system.axis_mass(a) / system.eta()))
            .collect();
        Self::from_gradient(system, grad_phi, dt)
    }

    fn from_gradient(system: &ParticleSystem, grad_phi: Vec<GridField>, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("{dt} is not strictly positive")));
        }
        let grid = grad_phi[0].grid().clone();
        system.check_dim(grid.dim())?;
        let variance: Vec<f64> = (0..grid.dim())
            .map(|a| system.eta() * dt / system.axis_mass(a))
            .collect();
        for (a, v) in variance.iter().enumerate() {
            let sigma = v.sqrt();
            let length = grid.lengths()[a];
            if sigma > length / 6.0 {
                return Err(Error::KernelTooWide { sigma, length });
            }
        }
        let mean = grad_phi
            .iter()
            .zip(&variance)
            .map(|(g, v)| g.scale(*v))
            .collect();
        Ok(Self {
            system: system.clone(),
            grid,
            dt,
            grad_phi,
            mean,
            variance,
        })
    }

    pub fn system(&self) -> &ParticleSystem {
        &self.system
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Per-axis variance `ηΔt / m_n`.
    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    /// Lagrange multiplier `α_n = m_n / (ηΔt)` for each particle.
    pub fn multipliers(&self) -> Vec<f64> {
        self.system
            .masses()
            .iter()
            .map(|m| m / (self.system.eta() * self.dt))
            .collect()
    }

    /// Mean-displacement fields, one per axis.
    pub fn mean_fields(&self) -> &[GridField] {
        &self.mean
    }

    /// Mean displacement at an arbitrary point (multilinear interpolation).
    pub fn mean_at(&self, x: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .map(|m| self.grid.interpolate(m.values(), x))
            .collect()
    }

    fn grad_phi_at(&self, x: &[f64]) -> Vec<f64> {
        self.grad_phi
            .iter()
            .map(|g| self.grid.interpolate(g.values(), x))
            .collect()
    }

    /// Log of the normalized Gaussian kernel density, using minimum-image
    /// displacements.
    pub fn log_density(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        let d = self.grid.dim();
        if x.len() != d || x_prime.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "points must have {d} coordinates"
            )));
        }
        let mean = self.mean_at(x);
        Ok(self.log_density_with_mean(x, x_prime, &mean))
    }

    fn log_density_with_mean(&self, x: &[f64], x_prime: &[f64], mean: &[f64]) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        (0..self.grid.dim())
            .map(|a| {
                let dx = self.grid.min_image(a, x_prime[a] - x[a]) - mean[a];
                let v = self.variance[a];
                -0.5 * dx * dx / v - 0.5 * (two_pi * v).ln()
            })
            .sum()
    }

    /// Constraint values `κ_n` and `κ'` at `x`, in closed form.
    pub fn step_moments(&self, x: &[f64]) -> StepMoments {
        let mean = self.mean_at(x);
        let grad = self.grad_phi_at(x);
        let d = self.system.spatial_dim();
        let kappa = (0..self.system.n_particles())
            .map(|n| {
                (n * d..(n + 1) * d)
                    .map(|a| self.variance[a] + mean[a] * mean[a])
                    .sum()
            })
            .collect();
        let kappa_prime = mean.iter().zip(&grad).map(|(m, g)| m * g).sum();
        StepMoments { kappa, kappa_prime }
    }

    /// Draws one displacement `Δx = ⟨Δx⟩ + Δw` at `x`.
    pub fn sample_displacement<R: rand::Rng>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let mean = self.mean_at(x);
        mean.iter()
            .zip(&self.variance)
            .map(|(m, v)| {
                let z: f64 = StandardNormal.sample(rng);
                m + v.sqrt() * z
            })
            .collect()
    }
}

pub fn kernel_log_density(kernel: &TransitionKernel, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    kernel.log_density(x, x_prime)
}

pub fn verify_constraints(kernel: &TransitionKernel, x: &[f64]) -> StepMoments {
    kernel.step_moments(x)
}

/// Monte Carlo estimate of the constraint values, paired with standard
/// errors for `κ_n` and `κ'`.
pub fn verify_constraints_mc(
    kernel: &TransitionKernel,
    x: &[f64],
    samples: usize,
    seed: u64,
) -> (StepMoments, StepMoments) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grad = kernel.grad_phi_at(x);
    let n = kernel.system.n_particles();
    let d = kernel.system.spatial_dim();
    let mut k_sum = vec![0.0; n];
    let mut k_sq = vec![0.0; n];
    let (mut kp_sum, mut kp_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let dx = kernel.sample_displacement(x, &mut rng);
        for p in 0..n {
            let s: f64 = (p * d..(p + 1) * d).map(|a| dx[a] * dx[a]).sum();
            k_sum[p] += s;
            k_sq[p] += s * s;
        }
        let s: f64 = dx.iter().zip(&grad).map(|(a, b)| a * b).sum();
        kp_sum += s;
        kp_sq += s * s;
    }
    let m = samples as f64;
    let se = |sum: f64, sq: f64| ((sq / m - (sum / m).powi(2)).max(0.0) / m).sqrt();
    (
        StepMoments {
            kappa: k_sum.iter().map(|s| s / m).collect(),
            kappa_prime: kp_sum / m,
        },
        StepMoments {
            kappa: k_sum.iter().zip(&k_sq).map(|(s, q)| se(*s, *q)).collect(),
            kappa_prime: se(kp_sum, kp_sq),
        },
    )
}

/// `-∫ p log(p/q)` by grid quadrature.
pub fn relative_entropy(p: &GridField, q: &GridField) -> Result<f64> {
    p.same_grid(q)?;
    p.check_density(crate::NORM_TOL)?;
    let unsupported = p
        .values()
        .iter()
        .zip(q.values())
        .filter(|(&pv, &qv)| pv > 0.0 && qv <= 0.0)
        .count();
    if unsupported > 0 {
        return Err(Error::UnsupportedReference { count: unsupported });
    }
    let terms: Vec<f64> = p
        .values()
        .iter()
        .zip(q.values())
        .map(|(&pv, &qv)| if pv > 0.0 { -pv * (pv / qv).ln() } else { 0.0 })
        .collect();
    Ok(ops::sum(&terms) * p.grid().cell_volume())
}

/// `ρ'(x') = ∫ P(x'|x) ρ(x) dx` by dense quadrature, renormalized.
pub fn ck_propagate(rho: &GridField, kernel: &TransitionKernel) -> Result<CkStep> {
    let grid = rho.grid();
    if grid != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    if grid.len() > CK_POINT_LIMIT {
        return Err(Error::GridTooLarge {
            points: grid.len(),
            limit: CK_POINT_LIMIT,
        });
    }
    rho.check_density(crate::NORM_TOL)?;
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let means: Vec<Vec<f64>> = (0..grid.len())
        .map(|i| kernel.mean.iter().map(|m| m.values()[i]).collect())
        .collect();
    let cell = grid.cell_volume();
    let target = |j: usize| -> f64 {
        let terms: Vec<f64> = (0..grid.len())
            .filter(|&i| rho.values()[i] != 0.0)
            .map(|i| {
                rho.values()[i] * kernel.log_density_with_mean(&points[i], &points[j], &means[i]).exp()
            })
            .collect();
        ops::sum(&terms) * cell
    };
    #[cfg(feature = "parallel")]
    let values: Vec<f64> = {
        use rayon::prelude::*;
        (0..grid.len()).into_par_iter().map(target).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = (0..grid.len()).map(target).collect();

    let out = GridField::new(grid.clone(), values)?;
    let before = ops::integrate(rho);
    let after = ops::integrate(&out);
    Ok(CkStep {
        rho: out.normalized()?,
        norm_deviation: after - before,
    })
}

/// Evolves `ρ` over the kernel's `Δt` under the Fokker–Planck equation
/// `∂_tρ = -∂_A(ρ b^A) + ½ η m^{AA} ∂_A²ρ` with the kernel's drift
/// `b = ⟨Δx⟩/Δt` held fixed, using `substeps` RK4 steps.
pub fn fp_propagate(rho: &GridField, kernel: &TransitionKernel, substeps: usize) -> Result<GridField> {
    let grid = rho.grid();
    if grid != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    if substeps == 0 {
        return Err(Error::invalid("substeps", "must be at least one"));
    }
    let dt = kernel.dt;
    let drift: Vec<Vec<f64>> = kernel
        .mean
        .iter()
        .map(|m| m.values().iter().map(|v| v / dt).collect())
        .collect();
    let diffusion: Vec<f64> = kernel.variance.iter().map(|v| 0.5 * v / dt).collect();
    let rhs = |r: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for a in 0..grid.dim() {
            let flux: Vec<f64> = r.iter().zip(&drift[a]).map(|(r, b)| r * b).collect();
            let df = ops::d1(grid, &flux, a);
            let ddr = ops::d2_compact(grid, r, a);
            for i in 0..out.len() {
                out[i] += -df[i] + diffusion[a] * ddr[i];
            }
        }
        out
    };
    let h = dt / substeps as f64;
    let mut r = rho.values().to_vec();
    let axpy = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + c * k).collect() };
    for _ in 0..substeps {
        let k1 = rhs(&r);
        let k2 = rhs(&axpy(&r, &k1, 0.5 * h));
        let k3 = rhs(&axpy(&r, &k2, 0.5 * h));
        let k4 = rhs(&axpy(&r, &k3, h));
        for i in 0..r.len() {
            r[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    GridField::new(grid.clone(), r).map_err(|_| Error::Divergence { step: substeps })
}
