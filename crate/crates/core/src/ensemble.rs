//! Walker ensembles driven by the maximum-entropy kernel.
//!
//! Each walker performs Euler–Maruyama steps `Δx = b Δt + Δw` with the drift
//! interpolated multilinearly from grid fields. Every walker owns a
//! ChaCha8 stream selected by its index, and the word position is advanced
//! by the step counter, so results do not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, CanonicalState};
use crate::grid::{Grid, GridField};
use crate::maxent::TransitionKernel;
use crate::ops::GridFft;
use crate::system::ParticleSystem;

/// Histograms from fewer walkers than this are refused.
pub const MIN_HISTOGRAM_WALKERS: usize = 100;

/// Random words reserved per walker and step.
const WORDS_PER_STEP: u128 = 1 << 20;

/// Stream offset used while drawing initial positions.
const INIT_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq)]
pub struct WalkerEnsemble {
    system: ParticleSystem,
    grid: Grid,
    positions: Vec<f64>,
    master_seed: u64,
    step: u64,
}

fn walker_rng(seed: u64, walker: usize, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(walker as u64);
    rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    rng
}

fn map_walkers<F>(count: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..count).map(f).collect();
    let mut out = Vec::with_capacity(count * dim);
    for r in rows {
        out.extend(r);
    }
    out
}

impl WalkerEnsemble {
    /// Ensemble from explicit positions, flattened walker-major. Positions
    /// are wrapped into the box.
    pub fn from_positions(
        system: &ParticleSystem,
        grid: &Grid,
        positions: Vec<f64>,
        master_seed: u64,
    ) -> Result<Self> {
        system.check_dim(grid.dim())?;
        let d = grid.dim();
        if !positions.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates do not split into {d}-dimensional walkers",
                positions.len()
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("walker positions"));
        }
        let positions = positions
            .iter()
            .enumerate()
            .map(|(i, &x)| grid.wrap(i % d, x))
            .collect();
        Ok(Self {
            system: system.clone(),
            grid: grid.clone(),
            positions,
            master_seed,
            step: 0,
        })
    }

    /// `count` walkers stacked at `x`.
    pub fn at_point(system: &ParticleSystem, grid: &Grid, x: &[f64], count: usize, master_seed: u64) -> Result<Self> {
        if x.len() != grid.dim() {
            return Err(Error::DimensionMismatch(format!("point has {} coordinates", x.len())));
        }
        Self::from_positions(system, grid, x.repeat(count), master_seed)
    }

    /// Independent draws from the product Gaussian with the given per-axis
    /// means and standard deviations.
    pub fn sample_gaussian(
        system: &ParticleSystem,
        grid: &Grid,
        mean: &[f64],
        sigma: &[f64],
        count: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let d = grid.dim();
        if mean.len() != d || sigma.len() != d {
            return Err(Error::DimensionMismatch(format!("mean and sigma need {d} components")));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("sigma", "standard deviations must be positive"));
        }
        let seed = master_seed ^ INIT_STREAM_SALT;
        let positions = map_walkers(count, d, |w| {
            let mut rng = walker_rng(seed, w, 0);
            (0..d)
                .map(|a| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean[a] + sigma[a] * z
                })
                .collect()
        });
        Self::from_positions(system, grid, positions, master_seed)
    }

    /// Draws walkers from a grid density: a cell is chosen with probability
    /// `ρ_i h^D`, then the walker is placed uniformly inside it.
    pub fn sample_density(system: &ParticleSystem, rho: &GridField, count: usize, master_seed: u64) -> Result<Self> {
        rho.check_density(crate::NORM_TOL)?;
        let grid = rho.grid();
        let d = grid.dim();
        let dv = grid.cell_volume();
        let mut cdf = Vec::with_capacity(rho.len());
        let mut acc = 0.0;
        for r in rho.values() {
            acc += r * dv;
            cdf.push(acc);
        }
        let total = acc;
        let seed = master_seed ^ INIT_STREAM_SALT;
        let positions = map_walkers(count, d, |w| {
            let mut rng = walker_rng(seed, w, 0);
            let u: f64 = rng.gen::<f64>() * total;
            let cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            let centre = grid.point(cell);
            (0..d)
                .map(|a| centre[a] + (rng.gen::<f64>() - 0.5) * grid.spacing(a))
                .collect()
        });
        Self::from_positions(system, grid, positions, master_seed)
    }

    pub fn system(&self) -> &ParticleSystem {
        &self.system
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.grid.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Number of steps taken so far; selects the random words of the next
    /// step.
    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Flattened walker-major coordinates.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn walker(&self, i: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.positions[i * d..(i + 1) * d]
    }

    /// One kernel step for every walker.
    pub fn sample_step(&self, kernel: &TransitionKernel) -> Result<Self> {
        if kernel.system() != &self.system {
            return Err(Error::DimensionMismatch("kernel and ensemble describe different systems".into()));
        }
        if kernel.grid().dim() != self.grid.dim() || kernel.grid().lengths() != self.grid.lengths() {
            return Err(Error::DimensionMismatch("kernel and ensemble live in different boxes".into()));
        }
        let d = self.grid.dim();
        let positions = map_walkers(self.len(), d, |w| {
            let x = self.walker(w);
            let mut rng = walker_rng(self.master_seed, w, self.step);
            let dx = kernel.sample_displacement(x, &mut rng);
            (0..d).map(|a| self.grid.wrap(a, x[a] + dx[a])).collect()
        });
        Ok(Self {
            positions,
            step: self.step + 1,
            ..self.clone()
        })
    }

    /// One Euler–Maruyama step with drift `b = v - u` rebuilt from a grid
    /// state.
    pub fn evolve_coupled(&self, state: &CanonicalState, dt: f64) -> Result<Self> {
        self.sample_step(&coupled_kernel(&self.system, state, dt)?)
    }

    /// Normalized histogram with cells centred on the grid points.
    pub fn estimate_density(&self, grid: &Grid) -> Result<DensityEstimate> {
        self.check_histogram(grid)?;
        let d = grid.dim();
        let mut counts = vec![0.0; grid.len()];
        let mut idx = vec![0usize; d];
        for w in 0..self.len() {
            let x = self.walker(w);
            for a in 0..d {
                let n = grid.points()[a];
                let s = (grid.wrap(a, x[a]) + 0.5 * grid.lengths()[a]) / grid.spacing(a);
                idx[a] = (s.round() as usize) % n;
            }
            counts[grid.flat_index(&idx)] += 1.0;
        }
        let scale = 1.0 / (self.len() as f64 * grid.cell_volume());
        let values = counts.iter().map(|c| c * scale).collect();
        Ok(DensityEstimate {
            rho: GridField::new(grid.clone(), values)?,
            walkers: self.len(),
            bandwidth: None,
        })
    }

    /// Histogram convolved with a periodic Gaussian of standard deviation
    /// `bandwidth` on every axis.
    pub fn estimate_density_smoothed(&self, grid: &Grid, bandwidth: f64) -> Result<DensityEstimate> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::invalid("bandwidth", format!("{bandwidth} is not strictly positive")));
        }
        let raw = self.estimate_density(grid)?;
        let fft = GridFft::new(grid);
        let mut z: Vec<num_complex::Complex64> =
            raw.rho.values().iter().map(|&v| num_complex::Complex64::new(v, 0.0)).collect();
        fft.forward(&mut z);
        let symbol = fft.quadratic_symbol(&vec![0.5 * bandwidth * bandwidth; grid.dim()]);
        for (z, s) in z.iter_mut().zip(symbol) {
            *z *= (-s).exp();
        }
        fft.inverse(&mut z);
        let values = z.iter().map(|z| z.re.max(0.0)).collect();
        Ok(DensityEstimate {
            rho: GridField::new(grid.clone(), values)?.normalized()?,
            walkers: self.len(),
            bandwidth: Some(bandwidth),
        })
    }

    fn check_histogram(&self, grid: &Grid) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if self.len() < MIN_HISTOGRAM_WALKERS {
            return Err(Error::invalid(
                "walkers",
                format!("{} walkers are too few for a histogram (minimum {MIN_HISTOGRAM_WALKERS})", self.len()),
            ));
        }
        if grid.dim() != self.grid.dim() || grid.lengths() != self.grid.lengths() {
            return Err(Error::DimensionMismatch("histogram grid covers a different box".into()));
        }
        Ok(())
    }

    /// CSV rows `step,walker_id,x0,...` for the current positions.
    pub fn trajectory_rows(&self) -> String {
        let mut out = String::new();
        for w in 0..self.len() {
            out.push_str(&format!("{},{}", self.step, w));
            for x in self.walker(w) {
                out.push_str(&format!(",{x:.12e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Header line matching [`WalkerEnsemble::trajectory_rows`].
pub fn trajectory_header(dim: usize) -> String {
    let mut h = String::from("step,walker_id");
    for a in 0..dim {
        h.push_str(&format!(",x{a}"));
    }
    h
}

/// Histogram density together with how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub rho: GridField,
    pub walkers: usize,
    pub bandwidth: Option<f64>,
}

pub fn sample_step(ensemble: &WalkerEnsemble, kernel: &TransitionKernel) -> Result<WalkerEnsemble> {
    ensemble.sample_step(kernel)
}

/// Kernel whose mean displacement is `b Δt` with `b = v - u` taken from a
/// grid state.
pub fn coupled_kernel(system: &ParticleSystem, state: &CanonicalState, dt: f64) -> Result<TransitionKernel> {
    let vel = flow::velocities(state, system)?;
    TransitionKernel::from_drift_velocity(system, vel.drift_b, dt)
}

pub fn evolve_ensemble_coupled(ensemble: &WalkerEnsemble, state: &CanonicalState, dt: f64) -> Result<WalkerEnsemble> {
    ensemble.evolve_coupled(state, dt)
}

pub fn estimate_density(ensemble: &WalkerEnsemble, grid: &Grid) -> Result<GridField> {
    ensemble.estimate_density(grid).map(|e| e.rho)
}

/// Cell averages of `rho` over the cells of a coarser grid whose spacing is
/// an integer multiple of the fine spacing on every axis. Both grids must
/// cover the same box.
pub fn cell_average(rho: &GridField, coarse: &Grid) -> Result<GridField> {
    let fine = rho.grid();
    if fine.dim() != coarse.dim() || fine.lengths() != coarse.lengths() {
        return Err(Error::DimensionMismatch("grids cover different boxes".into()));
    }
    let d = fine.dim();
    let mut weights: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(d);
    for a in 0..d {
        let (nf, nc) = (fine.points()[a], coarse.points()[a]);
        if nf % nc != 0 {
            return Err(Error::invalid(
                "bins",
                format!("{nc} bins do not divide {nf} grid points on axis {a}"),
            ));
        }
        let r = nf / nc;
        let half = r as f64 / 2.0;
        let per_bin = (0..nc)
            .map(|j| {
                let centre = (j * r) as f64;
                let lo = (centre - half - 0.5).floor() as isize;
                let hi = (centre + half + 0.5).ceil() as isize;
                (lo..=hi)
                    .filter_map(|i| {
                        let overlap = ((i as f64 + 0.5).min(centre + half) - (i as f64 - 0.5).max(centre - half)).max(0.0);
                        (overlap > 0.0).then(|| (i.rem_euclid(nf as isize) as usize, overlap / r as f64))
                    })
                    .collect()
            })
            .collect();
        weights.push(per_bin);
    }
    let mut out = vec![0.0; coarse.len()];
    let mut fine_idx = vec![0usize; d];
    for (flat, o) in out.iter_mut().enumerate() {
        let cidx = coarse.multi_index(flat);
        let lists: Vec<&Vec<(usize, f64)>> = (0..d).map(|a| &weights[a][cidx[a]]).collect();
        let mut counters = vec![0usize; d];
        loop {
            let mut w = 1.0;
            for a in 0..d {
                let (i, wa) = lists[a][counters[a]];
                fine_idx[a] = i;
                w *= wa;
            }
            *o += w * rho.values()[fine.flat_index(&fine_idx)];
            let mut a = 0;
            while a < d {
                counters[a] += 1;
                if counters[a] < lists[a].len() {
                    break;
                }
                counters[a] = 0;
                a += 1;
            }
            if a == d {
                break;
            }
        }
    }
    GridField::new(coarse.clone(), out)
}

/// Displacement statistics of a paired ensemble step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// Mean displacement per axis.
    pub empirical_mean: Vec<f64>,
    /// Variance per axis of the displacement about its reference.
    pub empirical_cov: Vec<f64>,
    /// Standard errors of `empirical_mean`.
    pub standard_errors: Vec<f64>,
    /// Standard errors of `empirical_cov`.
    pub cov_standard_errors: Vec<f64>,
    pub walkers: usize,
}

/// Per-axis moments of `after - before` (minimum image). The covariance is
/// taken about the empirical mean.
pub fn empirical_moments(before: &WalkerEnsemble, after: &WalkerEnsemble) -> Result<MomentReport> {
    moments(before, after, None)
}

/// Like [`empirical_moments`], but the covariance is taken about the
/// kernel's local mean displacement at each walker's starting point.
pub fn empirical_moments_about_drift(
    before: &WalkerEnsemble,
    after: &WalkerEnsemble,
    kernel: &TransitionKernel,
) -> Result<MomentReport> {
    moments(before, after, Some(kernel))
}

fn moments(before: &WalkerEnsemble, after: &WalkerEnsemble, kernel: Option<&TransitionKernel>) -> Result<MomentReport> {
    if before.len() != after.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} walkers before and {} after",
            before.len(),
            after.len()
        )));
    }
    if before.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if before.grid.dim() != after.grid.dim() {
        return Err(Error::DimensionMismatch("ensembles have different dimensions".into()));
    }
    let d = before.grid.dim();
    let m = before.len() as f64;
    let mut disp = vec![0.0; before.positions.len()];
    let mut centred = vec![0.0; before.positions.len()];
    for w in 0..before.len() {
        let (x, y) = (before.walker(w), after.walker(w));
        let local = kernel.map(|k| k.mean_at(x));
        for a in 0..d {
            let dx = before.grid.min_image(a, y[a] - x[a]);
            disp[w * d + a] = dx;
            centred[w * d + a] = dx - local.as_ref().map_or(0.0, |l| l[a]);
        }
    }
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    let mut se = vec![0.0; d];
    let mut var_se = vec![0.0; d];
    for a in 0..d {
        let mu = disp.iter().skip(a).step_by(d).sum::<f64>() / m;
        let second = disp.iter().skip(a).step_by(d).map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
        mean[a] = mu;
        se[a] = (second / m).sqrt();
        let centre = if kernel.is_some() { 0.0 } else { mu };
        let (mut s2, mut s4) = (0.0, 0.0);
        for v in centred.iter().skip(a).step_by(d) {
            let c = v - centre;
            s2 += c * c;
            s4 += c * c * c * c;
        }
        let v2 = s2 / m;
        var[a] = v2;
        var_se[a] = ((s4 / m - v2 * v2).max(0.0) / m).sqrt();
    }
    Ok(MomentReport {
        empirical_mean: mean,
        empirical_cov: var,
        standard_errors: se,
        cov_standard_errors: var_se,
        walkers: before.len(),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("samples", "need at least two paired points"));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("samples", "log-log fit needs positive values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxent::DriftPotential;

    fn line() -> (ParticleSystem, Grid) {
        (ParticleSystem::single(1.0, 1.0).unwrap(), Grid::line(64, 8.0).unwrap())
    }

    #[test]
    fn positions_wrap_into_box() {
        let (s, g) = line();
        let e = WalkerEnsemble::from_positions(&s, &g, vec![4.5, -4.5, 0.25], 1).unwrap();
        for x in e.positions() {
            assert!((-4.0..4.0).contains(x));
        }
        assert!((e.walker(0)[0] + 3.5).abs() < 1e-12);
        assert!((e.walker(1)[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn streams_differ_between_walkers() {
        let a: f64 = walker_rng(7, 0, 0).gen();
        let b: f64 = walker_rng(7, 1, 0).gen();
        let c: f64 = walker_rng(7, 0, 1).gen();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, walker_rng(7, 0, 0).gen::<f64>());
    }

    #[test]
    fn spike_histogram() {
        let (s, g) = line();
        let e = WalkerEnsemble::at_point(&s, &g, &[0.0], 200, 3).unwrap();
        let rho = e.estimate_density(&g).unwrap().rho;
        let peak = 1.0 / g.spacing(0);
        assert_eq!(rho.values().iter().filter(|&&v| v > 0.0).count(), 1);
        assert!((rho.values()[g.origin_index()] - peak).abs() < 1e-12);
    }

    #[test]
    fn histogram_guards() {
        let (s, g) = line();
        let empty = WalkerEnsemble::from_positions(&s, &g, vec![], 0).unwrap();
        assert_eq!(empty.estimate_density(&g), Err(Error::EmptyEnsemble));
        let few = WalkerEnsemble::at_point(&s, &g, &[0.0], 10, 0).unwrap();
        assert!(matches!(few.estimate_density(&g), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn zero_step_moments_vanish() {
        let (s, g) = line();
        let e = WalkerEnsemble::sample_gaussian(&s, &g, &[0.0], &[1.0], 500, 5).unwrap();
        let r = empirical_moments(&e, &e).unwrap();
        assert_eq!(r.empirical_mean, vec![0.0]);
        assert_eq!(r.empirical_cov, vec![0.0]);
    }

    #[test]
    fn cell_average_preserves_integral() {
        let g = Grid::line(64, 8.0).unwrap();
        let rho = crate::infogeo::gaussian_density(&g, &[0.3], &[0.7]).unwrap();
        for bins in [32, 16, 8] {
            let c = cell_average(&rho, &Grid::line(bins, 8.0).unwrap()).unwrap();
            assert!((crate::ops::integrate(&c) - 1.0).abs() < 1e-12);
        }
        assert!(cell_average(&rho, &Grid::line(24, 8.0).unwrap()).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.01, 0.001];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn step_advances_counter() {
        let (s, g) = line();
        let k = TransitionKernel::new(&s, &DriftPotential::periodic(GridField::zeros(&g)), 0.01).unwrap();
        let e = WalkerEnsemble::at_point(&s, &g, &[0.0], 4, 9).unwrap();
        let e1 = e.sample_step(&k).unwrap();
        assert_eq!(e1.step_index(), 1);
        assert_ne!(e1.positions(), e.positions());
    }
}
