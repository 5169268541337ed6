//! Uniform periodic grids over a box `[-L/2, L/2)` per axis, and the real and
//! complex fields sampled on them.
//!
//! Storage is row-major: the last axis varies fastest.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<usize>,
    lengths: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<usize>, lengths: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != lengths.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} point counts for {} lengths",
                points.len(),
                lengths.len()
            )));
        }
        if points.iter().any(|&n| n < 5) {
            return Err(Error::invalid("points", "every axis needs at least 5 points"));
        }
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::invalid("lengths", "box lengths must be positive"));
        }
        Ok(Self { points, lengths })
    }

    pub fn line(points: usize, length: f64) -> Result<Self> {
        Self::new(vec![points], vec![length])
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.points[axis] as f64
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.points[axis + 1..].iter().product()
    }

    /// Coordinate of index `i` along `axis`.
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        -0.5 * self.lengths[axis] + i as f64 * self.spacing(axis)
    }

    pub fn axis_coordinates(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis]).map(|i| self.coordinate(axis, i)).collect()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.points[a];
            flat /= self.points[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.points)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Coordinates of the grid point with flat index `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coordinate(a, i))
            .collect()
    }

    /// Flat index of the grid point closest to the coordinate origin.
    pub fn origin_index(&self) -> usize {
        let idx: Vec<usize> = self.points.iter().map(|n| n / 2).collect();
        self.flat_index(&idx)
    }

    /// Wraps a coordinate into `[-L/2, L/2)`.
    pub fn wrap(&self, axis: usize, x: f64) -> f64 {
        let l = self.lengths[axis];
        let y = (x + 0.5 * l).rem_euclid(l) - 0.5 * l;
        // rem_euclid can return exactly l for tiny negative inputs
        if y >= 0.5 * l {
            y - l
        } else {
            y
        }
    }

    /// Minimum-image representative of a displacement.
    pub fn min_image(&self, axis: usize, dx: f64) -> f64 {
        let l = self.lengths[axis];
        dx - l * (dx / l).round()
    }

    /// Multilinear interpolation weights for a point: the lower corner index
    /// and fractional offset along each axis.
    pub(crate) fn locate(&self, x: &[f64]) -> (Vec<usize>, Vec<f64>) {
        let mut lower = Vec::with_capacity(self.dim());
        let mut frac = Vec::with_capacity(self.dim());
        for (a, &xa) in x.iter().enumerate() {
            let n = self.points[a];
            let s = (self.wrap(a, xa) + 0.5 * self.lengths[a]) / self.spacing(a);
            let i = s.floor();
            let f = s - i;
            lower.push((i as isize).rem_euclid(n as isize) as usize);
            frac.push(f.clamp(0.0, 1.0));
        }
        (lower, frac)
    }

    /// Multilinear interpolation of grid values at an arbitrary point.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let (lower, frac) = self.locate(x);
        let d = self.dim();
        let mut acc = 0.0;
        let mut idx = vec![0; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for a in 0..d {
                let up = (corner >> a) & 1 == 1;
                idx[a] = if up {
                    (lower[a] + 1) % self.points[a]
                } else {
                    lower[a]
                };
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * values[self.flat_index(&idx)];
            }
        }
        acc
    }
}

/// Real scalar field on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid field"));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
            grid: grid.clone(),
        }
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::new(grid.clone(), values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts_unchecked(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self::from_parts_unchecked(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sqrt(∫ (f - g)^2)` by grid quadrature.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((s * self.grid.cell_volume()).sqrt())
    }

    /// `∫ |f - g|` by grid quadrature.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn linf_distance(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Rescales so the integral is one.
    pub fn normalized(&self) -> Result<Self> {
        let z = crate::ops::integrate(self);
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::NotNormalized { integral: z });
        }
        Ok(self.scale(1.0 / z))
    }

    /// Checks the density contract: non-negative and integrating to one
    /// within `tol`.
    pub fn check_density(&self, tol: f64) -> Result<()> {
        let negative = self.values.iter().filter(|&&v| v < 0.0).count();
        if negative > 0 {
            return Err(Error::NegativeDensity { count: negative });
        }
        let z = crate::ops::integrate(self);
        if (z - 1.0).abs() > tol {
            return Err(Error::NotNormalized { integral: z });
        }
        Ok(())
    }

    /// CSV with header `x0,...,x{D-1},value`, one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for a in 0..self.grid.dim() {
            s.push_str(&format!("x{a},"));
        }
        s.push_str("value\n");
        for (i, v) in self.values.iter().enumerate() {
            for x in self.grid.point(i) {
                s.push_str(&format!("{x:e},"));
            }
            s.push_str(&format!("{v:e}\n"));
        }
        s
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// Complex field `Ψ_k = ρ^{1/2} exp(i k Φ / η)` together with its phase
/// convention `(k, η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: Grid,
    values: Vec<Complex64>,
    k: f64,
    eta: f64,
}

impl WaveField {
    pub fn new(grid: Grid, values: Vec<Complex64>, k: f64, eta: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::invalid("k", format!("{k} is not strictly positive")));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::invalid("eta", format!("{eta} is not strictly positive")));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("wave field"));
        }
        Ok(Self {
            grid,
            values,
            k,
            eta,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Phase scale `η / k`; equals ħ for a regraduated field.
    pub fn action_scale(&self) -> f64 {
        self.eta / self.k
    }

    pub fn density(&self) -> GridField {
        GridField::from_parts_unchecked(
            self.grid.clone(),
            self.values.iter().map(|z| z.norm_sqr()).collect(),
        )
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NotNormalized { integral: n });
        }
        let s = 1.0 / n.sqrt();
        Ok(Self {
            values: self.values.iter().map(|z| z * s).collect(),
            ..self.clone()
        })
    }

    /// `sqrt(∫ |Ψ - Ψ'|^2)`.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid.cell_volume()).sqrt())
    }
}
