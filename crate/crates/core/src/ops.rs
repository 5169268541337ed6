//! Differential and quadrature primitives on periodic grids.
//!
//! The default derivative is the fourth-order centered stencil
//! `(8(f[i+1] - f[i-1]) - (f[i+2] - f[i-2])) / 12h`, which is antisymmetric on
//! a periodic grid, so discrete integration by parts holds to round-off.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};

/// Spatial derivative scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    #[default]
    FourthOrder,
    Spectral,
}

/// Iterates over the 1D lines of `grid` along `axis` as `(start, stride)`.
pub(crate) fn lines(grid: &Grid, axis: usize) -> impl Iterator<Item = (usize, usize)> {
    let n = grid.points()[axis];
    let stride = grid.stride(axis);
    let outer = grid.len() / (n * stride);
    (0..outer).flat_map(move |o| (0..stride).map(move |j| (o * n * stride + j, stride)))
}

fn check_axis(grid: &Grid, axis: usize) -> Result<()> {
    if axis >= grid.dim() {
        return Err(Error::DimensionMismatch(format!(
            "axis {axis} out of range for a {}-dimensional grid",
            grid.dim()
        )));
    }
    Ok(())
}

/// Fourth-order centered first derivative of raw grid values.
pub(crate) fn d1(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.points()[axis];
    let c = 1.0 / (12.0 * grid.spacing(axis));
    let mut out = vec![0.0; values.len()];
    for (start, stride) in lines(grid, axis) {
        let at = |i: usize| values[start + (i % n) * stride];
        for i in 0..n {
            let (p1, p2) = (at(i + 1), at(i + 2));
            let (m1, m2) = (at(i + n - 1), at(i + n - 2));
            out[start + i * stride] = c * (8.0 * (p1 - m1) - (p2 - m2));
        }
    }
    out
}

/// Compact fourth-order second derivative
/// `(-f[i+2] + 16 f[i+1] - 30 f[i] + 16 f[i-1] - f[i-2]) / 12h^2`.
pub(crate) fn d2_compact(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.points()[axis];
    let h = grid.spacing(axis);
    let c = 1.0 / (12.0 * h * h);
    let mut out = vec![0.0; values.len()];
    for (start, stride) in lines(grid, axis) {
        let at = |i: usize| values[start + (i % n) * stride];
        for i in 0..n {
            let s = -at(i + 2) + 16.0 * at(i + 1) - 30.0 * at(i + n) + 16.0 * at(i + n - 1)
                - at(i + n - 2);
            out[start + i * stride] = c * s;
        }
    }
    out
}

/// Spectral first derivative along one axis; the Nyquist mode is dropped.
pub(crate) fn d1_spectral(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.points()[axis];
    let plan = SpectralPlan::new(n);
    let wavenumbers = angular_wavenumbers(n, grid.lengths()[axis]);
    let mut out = vec![0.0; values.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (start, stride) in lines(grid, axis) {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(values[start + i * stride], 0.0);
        }
        plan.forward.process(&mut buf);
        for (i, b) in buf.iter_mut().enumerate() {
            *b *= if n.is_multiple_of(2) && i == n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, wavenumbers[i])
            };
        }
        plan.inverse.process(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            out[start + i * stride] = b.re / n as f64;
        }
    }
    out
}

/// `∂f/∂x_axis` with the default fourth-order stencil.
pub fn gradient(field: &GridField, axis: usize) -> Result<GridField> {
    gradient_with(field, axis, Stencil::FourthOrder)
}

pub fn gradient_with(field: &GridField, axis: usize, stencil: Stencil) -> Result<GridField> {
    check_axis(field.grid(), axis)?;
    let v = match stencil {
        Stencil::FourthOrder => d1(field.grid(), field.values(), axis),
        Stencil::Spectral => d1_spectral(field.grid(), field.values(), axis),
    };
    Ok(GridField::from_parts_unchecked(field.grid().clone(), v))
}

/// Compact fourth-order `∂²f/∂x_axis²`.
pub fn second_derivative(field: &GridField, axis: usize) -> Result<GridField> {
    check_axis(field.grid(), axis)?;
    Ok(GridField::from_parts_unchecked(
        field.grid().clone(),
        d2_compact(field.grid(), field.values(), axis),
    ))
}

/// Trapezoid quadrature over the periodic box (identical to the rectangle
/// rule on a periodic grid).
pub fn integrate(field: &GridField) -> f64 {
    sum(field.values()) * field.grid().cell_volume()
}

/// `∫ f g` by grid quadrature.
pub fn inner(f: &GridField, g: &GridField) -> Result<f64> {
    f.same_grid(g)?;
    let s: Vec<f64> = f.values().iter().zip(g.values()).map(|(a, b)| a * b).collect();
    Ok(sum(&s) * f.grid().cell_volume())
}

/// Pairwise summation keeps quadrature round-off at the `log n` level.
pub(crate) fn sum(values: &[f64]) -> f64 {
    if values.len() <= 64 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    sum(a) + sum(b)
}

/// Angular wavenumbers in FFT order for `n` points on a ring of length `l`.
pub(crate) fn angular_wavenumbers(n: usize, l: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / l;
    (0..n)
        .map(|i| {
            let j = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            base * j
        })
        .collect()
}

#[derive(Clone)]
pub(crate) struct SpectralPlan {
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
}

impl SpectralPlan {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

/// Multi-dimensional FFT over every axis of `grid`, in place.
/// The inverse transform is unnormalized; callers divide by `grid.len()`.
pub struct GridFft {
    grid: Grid,
    plans: Vec<SpectralPlan>,
}

impl GridFft {
    pub fn new(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            plans: grid.points().iter().map(|&n| SpectralPlan::new(n)).collect(),
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, false);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, true);
        let s = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }

    fn apply(&self, data: &mut [Complex64], inverse: bool) {
        for axis in 0..self.grid.dim() {
            let n = self.grid.points()[axis];
            let plan = if inverse {
                &self.plans[axis].inverse
            } else {
                &self.plans[axis].forward
            };
            if self.grid.stride(axis) == 1 {
                for chunk in data.chunks_exact_mut(n) {
                    plan.process(chunk);
                }
                continue;
            }
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for (start, stride) in lines(&self.grid, axis) {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = data[start + i * stride];
                }
                plan.process(&mut buf);
                for (i, b) in buf.iter().enumerate() {
                    data[start + i * stride] = *b;
                }
            }
        }
    }

    /// Sum over axes of `coeff[a] * κ_a²` at every spectral index.
    pub fn quadratic_symbol(&self, coeff: &[f64]) -> Vec<f64> {
        let ks: Vec<Vec<f64>> = (0..self.grid.dim())
            .map(|a| angular_wavenumbers(self.grid.points()[a], self.grid.lengths()[a]))
            .collect();
        (0..self.grid.len())
            .map(|flat| {
                self.grid
                    .multi_index(flat)
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| coeff[a] * ks[a][i] * ks[a][i])
                    .sum()
            })
            .collect()
    }
}
