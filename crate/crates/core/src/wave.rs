//! Wave-function layer: composition `Ψ_k = √ρ e^{ikΦ/η}`, the nonlinear
//! equation at general `k`, regraduation to `k̂`, and the linear solver.
//!
//! At scale `k` the field obeys
//!
//! ```text
//! i(η/k) ∂_tΨ = -(η²/2k²) m^{AB}∂_A∂_BΨ + (η²/2k² - 4ξ) m^{AB}(∂_A∂_B|Ψ|/|Ψ|) Ψ + VΨ
//! ```
//!
//! Both solvers use the same Strang splitting: a half kinetic step in
//! Fourier space, a pointwise phase rotation by the potential (plus the
//! nonlinear term), and another half kinetic step. The rotation leaves `|Ψ|`
//! unchanged, so the nonlinear term is evaluated exactly at the midpoint.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::CanonicalState;
use crate::grid::{Grid, GridField, WaveField};
use crate::infogeo::DensityFloor;
use crate::ops::{self, GridFft};
use crate::potential::Potential;
use crate::system::ParticleSystem;

/// Closed-form regraduation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regraduation {
    pub xi: f64,
    pub eta: f64,
    pub k_hat: f64,
    pub hbar: f64,
}

pub fn regraduate(xi: f64, eta: f64) -> Result<Regraduation> {
    if !(xi.is_finite() && xi > 0.0) {
        return Err(Error::invalid(
            "xi",
            format!("{xi}: regraduation needs ξ > 0 (ξ < 0 is unstable, ξ = 0 is a different theory)"),
        ));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid("eta", format!("{eta} is not strictly positive")));
    }
    let k_hat = (eta * eta / (8.0 * xi)).sqrt();
    Ok(Regraduation {
        xi,
        eta,
        k_hat,
        hbar: (8.0 * xi).sqrt(),
    })
}

impl Regraduation {
    /// Nonlinear coefficient `η²/2k² - 4ξ` at scale `k`.
    pub fn coefficient(&self, k: f64) -> f64 {
        nonlinear_coefficient(k, self.xi, self.eta)
    }
}

/// `η²/2k² - 4ξ`, written as `4ξ((k̂/k)² - 1)` with `k̂² = η²/8ξ` so that it
/// vanishes exactly at `k = k̂`.
pub fn nonlinear_coefficient(k: f64, xi: f64, eta: f64) -> f64 {
    if xi == 0.0 {
        return eta * eta / (2.0 * k * k);
    }
    let k_hat = (eta * eta / (8.0 * xi)).sqrt();
    let r = k_hat / k;
    4.0 * xi * (r * r - 1.0)
}

pub fn compose_psi(state: &CanonicalState, k: f64, eta: f64) -> Result<WaveField> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::invalid("k", format!("{k} is not strictly positive")));
    }
    if state.rho.values().iter().any(|&r| r < 0.0) {
        return Err(Error::NegativeDensity {
            count: state.rho.values().iter().filter(|&&r| r < 0.0).count(),
        });
    }
    let phase = state.phi_values();
    let values = state
        .rho
        .values()
        .iter()
        .zip(&phase)
        .map(|(r, p)| Complex64::from_polar(r.sqrt(), k * p / eta))
        .collect();
    WaveField::new(state.grid().clone(), values, k, eta)
}

/// Result of [`decompose_psi`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub state: CanonicalState,
    /// Flat index of the unwrap reference point.
    pub reference: usize,
    /// Floored points adjacent to resolved density.
    pub nodes: usize,
    /// Winding number along each axis line through the reference point.
    pub winding: Vec<i64>,
}

/// `ρ = |Ψ|²` and `Φ = (η/k) θ` with `θ` unwrapped from the grid point
/// nearest the coordinate origin: first along axis 0 through that point,
/// then along axis 1 from every point already reached, and so on.
/// Any winding is moved into the state's tilt, so the periodic part of `Φ`
/// stays continuous across the box.
pub fn decompose_psi(psi: &WaveField) -> Result<Decomposition> {
    let grid = psi.grid();
    let rho = psi.density();
    let floor = DensityFloor::default();
    let nodes = floor.interior_hits(&rho);
    if nodes * 100 > grid.len() {
        return Err(Error::TooManyNodes {
            count: nodes,
            total: grid.len(),
        });
    }
    let v = psi.values();
    let origin = grid.origin_index();
    let o = grid.multi_index(origin);
    let mut theta = vec![0.0; grid.len()];
    theta[origin] = v[origin].arg();
    let step = |from: usize, to: usize, theta: &mut Vec<f64>| {
        theta[to] = theta[from] + (v[to] * v[from].conj()).arg();
    };
    for a in 0..grid.dim() {
        let n = grid.points()[a];
        let stride = grid.stride(a);
        for q in 0..grid.len() {
            let idx = grid.multi_index(q);
            if (a..grid.dim()).any(|b| idx[b] != o[b]) {
                continue;
            }
            for i in o[a] + 1..n {
                step(q + (i - 1 - o[a]) * stride, q + (i - o[a]) * stride, &mut theta);
            }
            for i in (0..o[a]).rev() {
                step(q - (o[a] - i - 1) * stride, q - (o[a] - i) * stride, &mut theta);
            }
        }
    }
    let scale = psi.action_scale();
    let winding: Vec<i64> = (0..grid.dim())
        .map(|a| {
            let n = grid.points()[a];
            let stride = grid.stride(a);
            let base = origin - o[a] * stride;
            let total: f64 = (0..n)
                .map(|i| {
                    let from = base + i * stride;
                    let to = base + ((i + 1) % n) * stride;
                    (v[to] * v[from].conj()).arg()
                })
                .sum();
            (total / (2.0 * std::f64::consts::PI)).round() as i64
        })
        .collect();
    let tilt: Vec<f64> = (0..grid.dim())
        .map(|a| 2.0 * std::f64::consts::PI * winding[a] as f64 * scale / grid.lengths()[a])
        .collect();
    let phi: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            scale * theta[i] - tilt.iter().zip(&x).map(|(t, x)| t * x).sum::<f64>()
        })
        .collect();
    let state = CanonicalState::new(rho, GridField::new(grid.clone(), phi)?, 0.0)?.with_tilt(tilt)?;
    Ok(Decomposition {
        state,
        reference: origin,
        nodes,
        winding,
    })
}

/// Phase winding around one axis loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Winding {
    pub winding: i64,
    /// `∮ ∂θ / 2π` before rounding.
    pub accumulated: f64,
    /// Distance of `accumulated` from the nearest integer.
    pub distance: f64,
}

/// Largest accepted distance of the accumulated winding from an integer.
pub const WINDING_TOLERANCE: f64 = 0.25;

/// Winding of `θ = kΦ/η` around the axis loop through the grid point
/// nearest the origin. The loop integral of `∂θ` is taken with the
/// fourth-order stencil applied to `e^{iθ}`, so it is insensitive to
/// branch cuts and its distance from an integer measures how well the
/// phase is resolved.
pub fn phase_winding(state: &CanonicalState, axis: usize, k: f64, eta: f64) -> Result<Winding> {
    let theta = state.phi_values();
    let grid = state.grid();
    let z: Vec<Complex64> = theta.iter().map(|t| Complex64::from_polar(1.0, k * t / eta)).collect();
    winding_of_values(grid, &z, axis)
}

pub fn phase_winding_psi(psi: &WaveField, axis: usize) -> Result<Winding> {
    winding_of_values(psi.grid(), psi.values(), axis)
}

fn winding_of_values(grid: &Grid, values: &[Complex64], axis: usize) -> Result<Winding> {
    if axis >= grid.dim() {
        return Err(Error::DimensionMismatch(format!("no axis {axis}")));
    }
    let n = grid.points()[axis];
    let stride = grid.stride(axis);
    let o = grid.multi_index(grid.origin_index());
    let mut start_idx = o.clone();
    start_idx[axis] = 0;
    let start = grid.flat_index(&start_idx);
    let unit = |i: usize| {
        let z = values[start + (i % n) * stride];
        let r = z.norm();
        if r > 0.0 {
            z / r
        } else {
            Complex64::new(1.0, 0.0)
        }
    };
    let h = grid.spacing(axis);
    let terms: Vec<f64> = (0..n)
        .map(|i| {
            let dz = (8.0 * (unit(i + 1) - unit(i + n - 1)) - (unit(i + 2) - unit(i + n - 2))) / (12.0 * h);
            (unit(i).conj() * dz).im
        })
        .collect();
    let accumulated = ops::sum(&terms) * h / (2.0 * std::f64::consts::PI);
    let winding = accumulated.round();
    let distance = (accumulated - winding).abs();
    if distance > WINDING_TOLERANCE {
        return Err(Error::PhaseUnderResolved {
            accumulated,
            distance,
        });
    }
    Ok(Winding {
        winding: winding as i64,
        accumulated,
        distance,
    })
}

/// Split-step Fourier propagator for one system, grid and potential.
pub struct SchrodingerSolver {
    grid: Grid,
    system: ParticleSystem,
    potential: GridField,
    fft: GridFft,
    /// `Σ_A κ_A² / m_A` at every spectral index.
    symbol: Vec<f64>,
    floor: DensityFloor,
}

impl SchrodingerSolver {
    pub fn new(system: &ParticleSystem, potential: &Potential, grid: &Grid) -> Result<Self> {
        let v = potential.evaluate(grid, system)?;
        Self::with_potential_field(system, v)
    }

    pub fn with_potential_field(system: &ParticleSystem, potential: GridField) -> Result<Self> {
        let grid = potential.grid().clone();
        system.check_dim(grid.dim())?;
        let fft = GridFft::new(&grid);
        let inv_m: Vec<f64> = (0..grid.dim()).map(|a| system.inverse_mass(a)).collect();
        let symbol = fft.quadratic_symbol(&inv_m);
        Ok(Self {
            grid,
            system: system.clone(),
            potential,
            fft,
            symbol,
            floor: DensityFloor::default(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn check(&self, psi: &WaveField, dt: f64) -> Result<()> {
        if psi.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        if (psi.eta() - self.system.eta()).abs() > 1e-12 * self.system.eta() {
            return Err(Error::invalid("eta", "wave field and system disagree on η"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("{dt} is not strictly positive")));
        }
        Ok(())
    }

    /// `m^{AB} ∂_A∂_B|Ψ| / |Ψ|` through `s = log|Ψ|`, which is exact on
    /// Gaussian tails.
    fn amplitude_curvature(&self, values: &[Complex64]) -> Vec<f64> {
        let rho: Vec<f64> = values.iter().map(|z| z.norm_sqr()).collect();
        let peak = rho.iter().fold(0.0_f64, |m, &r| m.max(r));
        let eps = self.floor.relative * peak;
        let s: Vec<f64> = rho.iter().map(|r| 0.5 * (r + eps).ln()).collect();
        let mut out = vec![0.0; s.len()];
        for a in 0..self.grid.dim() {
            let ds = ops::d1(&self.grid, &s, a);
            let dds = ops::d1(&self.grid, &ds, a);
            let inv_m = self.system.inverse_mass(a);
            for i in 0..out.len() {
                out[i] += inv_m * (dds[i] + ds[i] * ds[i]);
            }
        }
        out
    }

    fn kinetic_half(&self, values: &mut [Complex64], hbar: f64, dt: f64) {
        self.fft.forward(values);
        for (z, s) in values.iter_mut().zip(&self.symbol) {
            *z *= Complex64::from_polar(1.0, -0.25 * hbar * s * dt);
        }
        self.fft.inverse(values);
    }

    fn run(&self, psi: &WaveField, c: f64, dt: f64, steps: usize) -> Result<WaveField> {
        self.check(psi, dt)?;
        let hbar = psi.action_scale();
        let mut values = psi.values().to_vec();
        for n in 1..=steps {
            self.kinetic_half(&mut values, hbar, dt);
            if c == 0.0 {
                for (z, v) in values.iter_mut().zip(self.potential.values()) {
                    *z *= Complex64::from_polar(1.0, -v * dt / hbar);
                }
            } else {
                let w = self.amplitude_curvature(&values);
                for ((z, v), w) in values.iter_mut().zip(self.potential.values()).zip(&w) {
                    *z *= Complex64::from_polar(1.0, -(v + c * w) * dt / hbar);
                }
            }
            self.kinetic_half(&mut values, hbar, dt);
            if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::Divergence { step: n });
            }
        }
        WaveField::new(self.grid.clone(), values, psi.k(), psi.eta())
    }

    /// Linear evolution `iħ∂_tΨ = -(ħ²/2) m^{AB}∂_A∂_BΨ + VΨ` with `ħ` taken
    /// from the field's phase scale.
    pub fn evolve_linear(&self, psi: &WaveField, dt: f64, steps: usize) -> Result<WaveField> {
        self.run(psi, 0.0, dt, steps)
    }

    /// Nonlinear evolution at the field's own `k`.
    pub fn evolve_nonlinear(&self, psi: &WaveField, xi: f64, dt: f64, steps: usize) -> Result<WaveField> {
        crate::infogeo::check_xi(xi)?;
        let rho = psi.density();
        if self.floor.interior_hits(&rho) * 100 > self.grid.len() {
            return Err(Error::TooManyNodes {
                count: self.floor.interior_hits(&rho),
                total: self.grid.len(),
            });
        }
        self.run(psi, nonlinear_coefficient(psi.k(), xi, psi.eta()), dt, steps)
    }

    /// Lowest eigenstate by imaginary-time propagation, with the harmonic
    /// case in closed form.
    pub fn ground_state(&self, potential: &Potential, hbar: f64) -> Result<GroundState> {
        ground_state(&self.system, potential, &self.grid, hbar)
    }
}

/// `ρ` and energy of the lowest eigenstate (`Φ ≡ 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub rho: GridField,
    pub energy: f64,
}

pub fn ground_state(system: &ParticleSystem, potential: &Potential, grid: &Grid, hbar: f64) -> Result<GroundState> {
    system.check_dim(grid.dim())?;
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(Error::invalid("hbar", format!("{hbar} is not strictly positive")));
    }
    if let Potential::Harmonic { .. } = potential {
        potential.validate(grid)?;
        let sigma: Vec<f64> = (0..grid.dim())
            .map(|a| (hbar / (2.0 * system.axis_mass(a) * potential.omega(a).unwrap())).sqrt())
            .collect();
        let rho = crate::infogeo::gaussian_density(grid, &vec![0.0; grid.dim()], &sigma)?;
        let energy = (0..grid.dim()).map(|a| 0.5 * hbar * potential.omega(a).unwrap()).sum();
        return Ok(GroundState { rho, energy });
    }
    let v = potential.evaluate(grid, system)?;
    let fft = GridFft::new(grid);
    let inv_m: Vec<f64> = (0..grid.dim()).map(|a| system.inverse_mass(a)).collect();
    let symbol = fft.quadratic_symbol(&inv_m);
    let tau = 1e-3 / (1.0 + v.max() - v.min()).max(1.0);
    let mut values: Vec<Complex64> = GridField::from_fn(grid, |x| {
        (-x.iter().map(|xa| xa * xa).sum::<f64>() / 2.0).exp()
    })?
    .values()
    .iter()
    .map(|&r| Complex64::new(r, 0.0))
    .collect();
    let energy_of = |values: &[Complex64]| -> f64 {
        let mut k = values.to_vec();
        fft.forward(&mut k);
        for (z, s) in k.iter_mut().zip(&symbol) {
            *z *= 0.5 * hbar * hbar * s;
        }
        fft.inverse(&mut k);
        let num: f64 = values
            .iter()
            .zip(&k)
            .zip(v.values())
            .map(|((z, hz), v)| (z.conj() * (hz + z * v)).re)
            .sum();
        let den: f64 = values.iter().map(|z| z.norm_sqr()).sum();
        num / den
    };
    let mut energy = energy_of(&values);
    for iter in 0..200_000 {
        fft.forward(&mut values);
        for (z, s) in values.iter_mut().zip(&symbol) {
            *z *= (-0.5 * hbar * s * tau).exp();
        }
        fft.inverse(&mut values);
        for (z, v) in values.iter_mut().zip(v.values()) {
            *z *= (-v * tau / hbar).exp();
        }
        let norm = (values.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell_volume()).sqrt();
        values.iter_mut().for_each(|z| *z /= norm);
        if iter % 100 == 99 {
            let e = energy_of(&values);
            if (e - energy).abs() < 1e-13 * e.abs().max(1.0) {
                energy = e;
                break;
            }
            energy = e;
        }
    }
    let rho = GridField::new(grid.clone(), values.iter().map(|z| z.norm_sqr()).collect())?.normalized()?;
    Ok(GroundState { rho, energy })
}

pub fn evolve_linear(
    psi: &WaveField,
    potential: &Potential,
    system: &ParticleSystem,
    dt: f64,
    steps: usize,
) -> Result<WaveField> {
    SchrodingerSolver::new(system, potential, psi.grid())?.evolve_linear(psi, dt, steps)
}

pub fn evolve_nonlinear(
    psi: &WaveField,
    xi: f64,
    potential: &Potential,
    system: &ParticleSystem,
    dt: f64,
    steps: usize,
) -> Result<WaveField> {
    SchrodingerSolver::new(system, potential, psi.grid())?.evolve_nonlinear(psi, xi, dt, steps)
}

/// CSV snapshot with header `x0,...,rho,phi,re_psi,im_psi`.
pub fn snapshot_csv(psi: &WaveField) -> Result<String> {
    let grid = psi.grid();
    let dec = decompose_psi(psi)?;
    let phi = dec.state.phi_values();
    let mut s = String::new();
    for a in 0..grid.dim() {
        s.push_str(&format!("x{a},"));
    }
    s.push_str("rho,phi,re_psi,im_psi\n");
    for i in 0..grid.len() {
        for x in grid.point(i) {
            s.push_str(&format!("{x:e},"));
        }
        let z = psi.values()[i];
        s.push_str(&format!("{:e},{:e},{:e},{:e}\n", z.norm_sqr(), phi[i], z.re, z.im));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn regraduation_examples() {
        let r = regraduate(0.125, 1.0).unwrap();
        assert_eq!((r.k_hat, r.hbar), (1.0, 1.0));
        let r = regraduate(2.0, 4.0).unwrap();
        assert_eq!((r.k_hat, r.hbar), (1.0, 4.0));
        for xi in [0.05, 0.125, 0.5] {
            let r = regraduate(xi, 1.0).unwrap();
            assert_eq!(r.coefficient(r.k_hat), 0.0);
        }
        assert!(regraduate(0.0, 1.0).is_err());
        assert!(regraduate(-0.1, 1.0).is_err());
    }

    #[test]
    fn compose_uniform() {
        let g = Grid::line(32, 4.0).unwrap();
        let st = CanonicalState::new(GridField::constant(&g, 0.25), GridField::zeros(&g), 0.0).unwrap();
        let psi = compose_psi(&st, 1.0, 1.0).unwrap();
        assert!(psi.values().iter().all(|z| (z.re - 0.5).abs() < 1e-15 && z.im == 0.0));
        assert!(compose_psi(&st, 0.0, 1.0).is_err());
    }

    #[test]
    fn plane_wave_decomposition() {
        let g = Grid::line(128, 2.0 * PI).unwrap();
        for n in [-2i64, 0, 3] {
            let vals = (0..g.len())
                .map(|i| Complex64::from_polar((1.0 / (2.0 * PI)).sqrt(), n as f64 * g.coordinate(0, i)))
                .collect();
            let psi = WaveField::new(g.clone(), vals, 1.0, 1.0).unwrap();
            let dec = decompose_psi(&psi).unwrap();
            assert_eq!(dec.winding, vec![n]);
            let phi = dec.state.phi_values();
            for i in 0..g.len() {
                assert!((phi[i] - n as f64 * g.coordinate(0, i)).abs() < 1e-12);
            }
            assert!(dec.state.phi.sup_norm() < 1e-12);
        }
    }

    #[test]
    fn linear_plane_wave_phase() {
        let g = Grid::line(64, 2.0 * PI).unwrap();
        let s = ParticleSystem::single(1.0, 1.0).unwrap();
        let kw = 3.0;
        let vals = (0..g.len())
            .map(|i| Complex64::from_polar((1.0 / (2.0 * PI)).sqrt(), kw * g.coordinate(0, i)))
            .collect();
        let psi = WaveField::new(g.clone(), vals, 1.0, 1.0).unwrap();
        let out = evolve_linear(&psi, &Potential::Free, &s, 1e-3, 1000).unwrap();
        let expected = Complex64::from_polar(1.0, -kw * kw / 2.0 * 1.0);
        for (a, b) in out.values().iter().zip(psi.values()) {
            assert!((a - b * expected).norm() < 1e-8 * b.norm());
        }
    }

    #[test]
    fn harmonic_imaginary_time_matches_closed_form() {
        let g = Grid::line(256, 16.0).unwrap();
        let s = ParticleSystem::single(1.0, 1.0).unwrap();
        let table = Potential::harmonic(1.0).evaluate(&g, &s).unwrap();
        let numeric = ground_state(&s, &Potential::Table { values: table.into_values() }, &g, 1.0).unwrap();
        let exact = ground_state(&s, &Potential::harmonic(1.0), &g, 1.0).unwrap();
        assert!((numeric.energy - 0.5).abs() < 1e-8, "{}", numeric.energy);
        assert!(numeric.rho.linf_distance(&exact.rho).unwrap() < 1e-6);
    }
}
