//! Information geometry of configuration space and of the density family.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::maxent::TransitionKernel;
use crate::ops;
use crate::system::ParticleSystem;

/// Dense square matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m.set(i, i, *d);
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, (0..n).map(|k| self.get(i, k) * other.get(k, j)).sum());
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Information metric `γ_AB` with the mass tensor `m_AB = (ηΔt/C) γ_AB` and
/// its inverse, the diffusion tensor `m^{AB}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTensors {
    pub gamma: SquareMatrix,
    pub mass_tensor: SquareMatrix,
    pub diffusion_tensor: SquareMatrix,
    pub c: f64,
}

/// Monte Carlo metric estimate with per-entry standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub tensors: MetricTensors,
    pub standard_errors: SquareMatrix,
    pub samples: usize,
}

/// Smallest sample count accepted by [`information_metric_mc`].
pub const MIN_METRIC_SAMPLES: usize = 10_000;

pub fn information_metric_closed(system: &ParticleSystem, dt: f64, c: f64) -> Result<MetricTensors> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("{dt} is not strictly positive")));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid("c", format!("{c} is not strictly positive")));
    }
    let dims = system.config_dim();
    let masses: Vec<f64> = (0..dims).map(|a| system.axis_mass(a)).collect();
    let scale = c / (system.eta() * dt);
    let gamma: Vec<f64> = masses.iter().map(|m| scale * m).collect();
    Ok(MetricTensors {
        gamma: SquareMatrix::diagonal(&gamma),
        mass_tensor: SquareMatrix::diagonal(&masses),
        diffusion_tensor: SquareMatrix::diagonal(&masses.iter().map(|m| 1.0 / m).collect::<Vec<_>>()),
        c,
    })
}

/// Estimates `γ_AB = C E[∂_A log P ∂_B log P]` by sampling `x'` from the
/// kernel at `x` and differentiating the log density in `x` by central
/// differences.
pub fn information_metric_mc(
    kernel: &TransitionKernel,
    x: &[f64],
    samples: usize,
    c: f64,
    seed: u64,
) -> Result<MetricEstimate> {
    if samples < MIN_METRIC_SAMPLES {
        return Err(Error::invalid(
            "samples",
            format!("{samples} is below the minimum of {MIN_METRIC_SAMPLES}"),
        ));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid("c", format!("{c} is not strictly positive")));
    }
    let grid = kernel.grid();
    let dims = grid.dim();
    if x.len() != dims {
        return Err(Error::DimensionMismatch(format!("point must have {dims} coordinates")));
    }
    if kernel.variance().iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("kernel", "degenerate variance"));
    }
    let steps: Vec<f64> = kernel.variance().iter().map(|v| 1e-4 * v.sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = SquareMatrix::zeros(dims);
    let mut sum_sq = SquareMatrix::zeros(dims);
    let mut xp = vec![0.0; dims];
    let mut shifted = x.to_vec();
    let mut score = vec![0.0; dims];
    for _ in 0..samples {
        let dx = kernel.sample_displacement(x, &mut rng);
        for a in 0..dims {
            xp[a] = grid.wrap(a, x[a] + dx[a]);
        }
        for a in 0..dims {
            shifted[a] = x[a] + steps[a];
            let up = kernel.log_density(&shifted, &xp)?;
            shifted[a] = x[a] - steps[a];
            let down = kernel.log_density(&shifted, &xp)?;
            shifted[a] = x[a];
            score[a] = (up - down) / (2.0 * steps[a]);
        }
        for a in 0..dims {
            for b in 0..dims {
                let v = score[a] * score[b];
                sum.data[a * dims + b] += v;
                sum_sq.data[a * dims + b] += v * v;
            }
        }
    }
    let m = samples as f64;
    let gamma = SquareMatrix {
        dim: dims,
        data: sum.data.iter().map(|s| c * s / m).collect(),
    };
    let standard_errors = SquareMatrix {
        dim: dims,
        data: sum
            .data
            .iter()
            .zip(&sum_sq.data)
            .map(|(s, q)| c * ((q / m - (s / m).powi(2)).max(0.0) / m).sqrt())
            .collect(),
    };
    let scale = kernel.system().eta() * kernel.dt() / c;
    let mass_tensor = SquareMatrix {
        dim: dims,
        data: gamma.data.iter().map(|g| g * scale).collect(),
    };
    let diffusion_tensor = SquareMatrix::diagonal(&mass_tensor.diag().iter().map(|m| 1.0 / m).collect::<Vec<_>>());
    Ok(MetricEstimate {
        tensors: MetricTensors {
            gamma,
            mass_tensor,
            diffusion_tensor,
            c,
        },
        standard_errors,
        samples,
    })
}

/// Relative floor applied wherever `log ρ` or `1/ρ` is needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityFloor {
    pub relative: f64,
}

impl Default for DensityFloor {
    fn default() -> Self {
        Self { relative: 1e-12 }
    }
}

/// Multiple of `ε` above which a density value counts as resolved.
pub const RESOLVED_FACTOR: f64 = 1e3;

impl DensityFloor {
    /// Absolute floor `ε = relative · max ρ`.
    pub fn value(&self, rho: &GridField) -> f64 {
        self.relative * rho.max().max(0.0)
    }

    /// Counts floored points that sit next to resolved density (at least
    /// `1e3 ε` on an axis neighbour). Smoothly decaying tails never trip
    /// this; nodes, noise and cut-off densities do.
    pub fn interior_hits(&self, rho: &GridField) -> usize {
        let eps = self.value(rho);
        let grid = rho.grid();
        let v = rho.values();
        (0..grid.len())
            .filter(|&i| v[i] < eps)
            .filter(|&i| {
                let idx = grid.multi_index(i);
                (0..grid.dim()).any(|a| {
                    let n = grid.points()[a];
                    [1, n - 1].iter().any(|&off| {
                        let mut j = idx.clone();
                        j[a] = (j[a] + off) % n;
                        v[grid.flat_index(&j)] >= RESOLVED_FACTOR * eps
                    })
                })
            })
            .count()
    }

    /// Errors when more than 1% of the grid is floored inside the support.
    pub fn check(&self, rho: &GridField) -> Result<()> {
        let count = self.interior_hits(rho);
        let total = rho.len();
        if count * 100 > total {
            return Err(Error::UnderResolved { count, total });
        }
        Ok(())
    }

    /// `½ log(ρ⁺ + ε)`.
    pub fn half_log(&self, rho: &GridField) -> GridField {
        let eps = self.value(rho);
        rho.map(|r| 0.5 * (r.max(0.0) + eps).ln())
    }

    /// `max(ρ, ε)`.
    pub fn clamp(&self, rho: &GridField) -> GridField {
        let eps = self.value(rho);
        rho.map(|r| r.max(eps))
    }
}

pub(crate) fn check_xi(xi: f64) -> Result<()> {
    if !(xi.is_finite() && xi >= 0.0) {
        return Err(Error::invalid("xi", format!("{xi} must be non-negative (negative values are unstable)")));
    }
    Ok(())
}

/// `I_AB = ∫ ∂_Aρ ∂_Bρ / ρ` by grid quadrature.
pub fn fisher_matrix(rho: &GridField) -> Result<SquareMatrix> {
    rho.check_density(crate::NORM_TOL)?;
    Ok(fisher_unchecked(rho, &DensityFloor::default()))
}

pub(crate) fn fisher_unchecked(rho: &GridField, floor: &DensityFloor) -> SquareMatrix {
    let grid = rho.grid();
    let dims = grid.dim();
    let clamped = floor.clamp(rho);
    let grads: Vec<Vec<f64>> = (0..dims).map(|a| ops::d1(grid, rho.values(), a)).collect();
    let mut out = SquareMatrix::zeros(dims);
    for a in 0..dims {
        for b in a..dims {
            let terms: Vec<f64> = (0..grid.len())
                .map(|i| grads[a][i] * grads[b][i] / clamped.values()[i])
                .collect();
            let v = ops::sum(&terms) * grid.cell_volume();
            out.set(a, b, v);
            out.set(b, a, v);
        }
    }
    out
}

/// `F[ρ] = ξ m^{AB} I_AB + ∫ρV`.
pub fn functional_f(rho: &GridField, xi: f64, v: &GridField, system: &ParticleSystem) -> Result<f64> {
    check_xi(xi)?;
    rho.same_grid(v)?;
    system.check_dim(rho.grid().dim())?;
    Ok(functional_f_unchecked(rho, xi, v, system, &DensityFloor::default()))
}

pub(crate) fn functional_f_unchecked(
    rho: &GridField,
    xi: f64,
    v: &GridField,
    system: &ParticleSystem,
    floor: &DensityFloor,
) -> f64 {
    let _ = floor;
    let fisher = if xi == 0.0 { 0.0 } else { fisher_trace(rho, system) };
    let potential: Vec<f64> = rho.values().iter().zip(v.values()).map(|(r, v)| r * v).collect();
    xi * fisher + ops::sum(&potential) * rho.grid().cell_volume()
}

/// `m^{AB} I_AB = -4 Σ_A m^{AA} ⟨√ρ, L_A √ρ⟩` with `L_A` the compact
/// second-difference operator. Its exact discrete derivative with respect
/// to `ρ` is the √ρ form of the quantum potential, which keeps the
/// semi-discrete flow Hamiltonian.
fn fisher_trace(rho: &GridField, system: &ParticleSystem) -> f64 {
    let grid = rho.grid();
    let amp: Vec<f64> = rho.values().iter().map(|r| r.max(0.0).sqrt()).collect();
    let mut total = 0.0;
    for a in 0..grid.dim() {
        let lap = ops::d2_compact(grid, &amp, a);
        let t: Vec<f64> = amp.iter().zip(&lap).map(|(r, l)| r * l).collect();
        total -= 4.0 * system.inverse_mass(a) * ops::sum(&t);
    }
    total * grid.cell_volume()
}

/// `Σ_A m^{AA} L_A√ρ / √ρ`, with `√ρ` in the denominator clamped at `√ε`.
fn amplitude_curvature(amplitude: &[f64], grid: &crate::grid::Grid, system: &ParticleSystem, floor_amp: f64) -> Vec<f64> {
    let mut out = vec![0.0; amplitude.len()];
    for a in 0..grid.dim() {
        let lap = ops::d2_compact(grid, amplitude, a);
        let inv_m = system.inverse_mass(a);
        for i in 0..out.len() {
            out[i] += inv_m * lap[i] / amplitude[i].max(floor_amp);
        }
    }
    out
}

/// `δF/δρ = -4ξ m^{AB} ∂_A∂_B√ρ / √ρ + V`.
pub fn quantum_potential(rho: &GridField, xi: f64, v: &GridField, system: &ParticleSystem) -> Result<GridField> {
    check_xi(xi)?;
    rho.same_grid(v)?;
    system.check_dim(rho.grid().dim())?;
    let floor = DensityFloor::default();
    floor.check(rho)?;
    Ok(quantum_potential_unchecked(rho, xi, v, system, &floor))
}

pub(crate) fn quantum_potential_unchecked(
    rho: &GridField,
    xi: f64,
    v: &GridField,
    system: &ParticleSystem,
    floor: &DensityFloor,
) -> GridField {
    let grid = rho.grid();
    let mut out = v.values().to_vec();
    if xi != 0.0 {
        let amp: Vec<f64> = rho.values().iter().map(|r| r.max(0.0).sqrt()).collect();
        let curv = amplitude_curvature(&amp, grid, system, floor.value(rho).sqrt());
        for (o, c) in out.iter_mut().zip(curv) {
            *o -= 4.0 * xi * c;
        }
    }
    GridField::from_parts_unchecked(grid.clone(), out)
}

/// `ξ m^{AB}(∂_Aρ ∂_Bρ / ρ² - 2 ∂_A∂_Bρ / ρ) + V`; the ρ-form cross-check of
/// [`quantum_potential`].
pub fn quantum_potential_rho_form(
    rho: &GridField,
    xi: f64,
    v: &GridField,
    system: &ParticleSystem,
) -> Result<GridField> {
    check_xi(xi)?;
    rho.same_grid(v)?;
    system.check_dim(rho.grid().dim())?;
    let floor = DensityFloor::default();
    floor.check(rho)?;
    let grid = rho.grid();
    let clamped = floor.clamp(rho);
    let mut out = v.values().to_vec();
    for a in 0..grid.dim() {
        let d = ops::d1(grid, rho.values(), a);
        let dd = ops::d2_compact(grid, rho.values(), a);
        let c = xi * system.inverse_mass(a);
        for i in 0..out.len() {
            let r = clamped.values()[i];
            out[i] += c * ((d[i] / r).powi(2) - 2.0 * dd[i] / r);
        }
    }
    Ok(GridField::from_parts_unchecked(grid.clone(), out))
}

/// Normalized Gaussian density centered at `mean` with per-axis widths.
pub fn gaussian_density(grid: &Grid, mean: &[f64], sigma: &[f64]) -> Result<GridField> {
    let raw = GridField::from_fn(grid, |x| {
        x.iter()
            .enumerate()
            .map(|(a, &xa)| {
                let z = grid.min_image(a, xa - mean[a]) / sigma[a];
                -0.5 * z * z
            })
            .sum::<f64>()
            .exp()
    })?;
    raw.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free(grid: &Grid) -> GridField {
        GridField::zeros(grid)
    }

    #[test]
    fn closed_metric_examples() {
        let s = ParticleSystem::single(1.0, 1.0).unwrap();
        let t = information_metric_closed(&s, 0.1, 1.0).unwrap();
        assert!((t.gamma.get(0, 0) - 10.0).abs() < 1e-12);

        let s2 = ParticleSystem::new(vec![1.0, 4.0], 1.0, 1).unwrap();
        let t2 = information_metric_closed(&s2, 0.1, 0.1).unwrap();
        assert_eq!(t2.gamma.diag(), vec![1.0, 4.0]);
        assert_eq!(t2.diffusion_tensor.diag(), vec![1.0, 0.25]);
        let id = t2.mass_tensor.matmul(&t2.diffusion_tensor);
        assert!(id.max_abs_diff(&SquareMatrix::diagonal(&[1.0, 1.0])) < 1e-15);

        assert!(information_metric_closed(&s, 0.0, 1.0).is_err());
        assert!(information_metric_closed(&s, 0.1, -1.0).is_err());
    }

    #[test]
    fn mc_rejects_small_sample_counts() {
        let g = Grid::line(64, 10.0).unwrap();
        let s = ParticleSystem::single(1.0, 1.0).unwrap();
        let k = crate::maxent::build_kernel(&s, &free(&g), 0.01).unwrap();
        assert!(information_metric_mc(&k, &[0.0], 100, 0.01, 1).is_err());
    }

    #[test]
    fn fisher_uniform_is_zero() {
        let g = Grid::new(vec![16, 16], vec![2.0, 2.0]).unwrap();
        let rho = GridField::constant(&g, 0.25);
        assert!(fisher_matrix(&rho).unwrap().data.iter().all(|v| v.abs() < 1e-14));
        assert!(fisher_matrix(&GridField::constant(&g, 1.0)).is_err());
    }

    #[test]
    fn fisher_gaussian() {
        let g = Grid::line(1024, 20.0).unwrap();
        let rho = gaussian_density(&g, &[0.0], &[0.5]).unwrap();
        let i = fisher_matrix(&rho).unwrap().get(0, 0);
        assert!((i - 4.0).abs() / 4.0 < 1e-6, "{i}");
    }

    #[test]
    fn functional_examples() {
        let g = Grid::line(1024, 20.0).unwrap();
        let s = ParticleSystem::single(1.0, 1.0).unwrap();
        let uniform = GridField::constant(&g, 1.0 / 20.0);
        assert_eq!(functional_f(&uniform, 0.0, &free(&g), &s).unwrap(), 0.0);
        let v0 = GridField::constant(&g, 2.5);
        assert!((functional_f(&uniform, 0.3, &v0, &s).unwrap() - 2.5).abs() < 1e-12);
        let rho = gaussian_density(&g, &[0.0], &[0.5]).unwrap();
        let f = functional_f(&rho, 0.125, &free(&g), &s).unwrap();
        assert!((f - 0.5).abs() / 0.5 < 1e-6);
        assert!(functional_f(&rho, -0.1, &free(&g), &s).is_err());
    }

    #[test]
    fn quantum_potential_uniform_is_v() {
        let g = Grid::line(64, 4.0).unwrap();
        let s = ParticleSystem::single(1.0, 1.0).unwrap();
        let v = GridField::from_fn(&g, |x| x[0].cos()).unwrap();
        let q = quantum_potential(&GridField::constant(&g, 0.25), 0.2, &v, &s).unwrap();
        assert!(q.linf_distance(&v).unwrap() < 1e-12);
    }

    #[test]
    fn quantum_potential_gaussian_closed_form() {
        // Q = ħ²/(2m) (1/(2σ²) - x²/(4σ⁴)) for ħ² = 8ξ
        let g = Grid::line(4096, 20.0).unwrap();
        let s = ParticleSystem::single(1.0, 1.0).unwrap();
        let sigma: f64 = 0.7;
        let rho = gaussian_density(&g, &[0.0], &[sigma]).unwrap();
        let q = quantum_potential(&rho, 0.125, &free(&g), &s).unwrap();
        for i in (1600..2496).step_by(37) {
            let x = g.coordinate(0, i);
            let exact = 0.5 * (0.5 / (sigma * sigma) - x * x / (4.0 * sigma.powi(4)));
            assert!((q.values()[i] - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn floor_flags_cut_off_densities_only() {
        let g = Grid::line(400, 20.0).unwrap();
        let rho = gaussian_density(&g, &[0.0], &[0.5]).unwrap();
        assert_eq!(DensityFloor::default().interior_hits(&rho), 0);
        let comb = GridField::from_fn(&g, |x| {
            if ((x[0] * 10.0).round() as i64) % 3 == 0 { 0.0 } else { 1.0 }
        })
        .unwrap()
        .normalized()
        .unwrap();
        assert!(matches!(DensityFloor::default().check(&comb), Err(Error::UnderResolved { .. })));
    }
}
