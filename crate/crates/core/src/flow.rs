//! Ensemble Hamiltonian dynamics of the canonical pair `(ρ, Φ)`.
//!
//! ```text
//! H[ρ,Φ] = ∫ ½ ρ m^{AB} ∂_AΦ ∂_BΦ + F[ρ]
//! ∂_t ρ  =  δH/δΦ = -∂_A(ρ m^{AB} ∂_B Φ)
//! ∂_t Φ  = -δH/δρ = -½ m^{AB} ∂_AΦ ∂_BΦ - δF/δρ
//! ```
//!
//! Spatial derivatives use the antisymmetric fourth-order stencil, so the
//! continuity right side is an exact discrete divergence and `∫ρ` is
//! conserved to round-off. Time stepping is classical RK4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::infogeo::{self, DensityFloor};
use crate::maxent::DriftPotential;
use crate::ops;
use crate::potential::Potential;
use crate::system::ParticleSystem;

/// Normalization tolerance for states handed in from outside.
pub const STATE_NORM_TOL: f64 = 1e-9;

/// Canonical pair at one instant. The action field is
/// `Φ(x) = phi(x) + tilt · x`, with `phi` periodic on the box; a non-zero
/// tilt represents plane-wave momentum or phase winding.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalState {
    pub rho: GridField,
    pub phi: GridField,
    pub tilt: Vec<f64>,
    pub time: f64,
}

fn phi_gradient(phi: &GridField, tilt: &[f64], axis: usize) -> Vec<f64> {
    let mut d = ops::d1(phi.grid(), phi.values(), axis);
    if tilt[axis] != 0.0 {
        d.iter_mut().for_each(|v| *v += tilt[axis]);
    }
    d
}

impl CanonicalState {
    pub fn new(rho: GridField, phi: GridField, time: f64) -> Result<Self> {
        rho.same_grid(&phi)?;
        rho.check_density(STATE_NORM_TOL)?;
        if !time.is_finite() {
            return Err(Error::NonFinite("time"));
        }
        let tilt = vec![0.0; rho.grid().dim()];
        Ok(Self { rho, phi, tilt, time })
    }

    pub fn with_tilt(mut self, tilt: Vec<f64>) -> Result<Self> {
        if tilt.len() != self.grid().dim() {
            return Err(Error::DimensionMismatch(format!(
                "tilt has {} components for a {}-dimensional grid",
                tilt.len(),
                self.grid().dim()
            )));
        }
        if tilt.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("tilt"));
        }
        self.tilt = tilt;
        Ok(self)
    }

    pub(crate) fn unchecked(rho: GridField, phi: GridField, tilt: Vec<f64>, time: f64) -> Self {
        Self { rho, phi, tilt, time }
    }

    /// `∂_A Φ` including the tilt.
    pub fn phi_gradient(&self, axis: usize) -> Vec<f64> {
        phi_gradient(&self.phi, &self.tilt, axis)
    }

    /// Full `Φ` values at the grid points, tilt included.
    pub fn phi_values(&self) -> Vec<f64> {
        let grid = self.grid();
        (0..grid.len())
            .map(|i| {
                let x = grid.point(i);
                self.phi.values()[i] + self.tilt.iter().zip(&x).map(|(t, x)| t * x).sum::<f64>()
            })
            .collect()
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn norm(&self) -> f64 {
        ops::integrate(&self.rho)
    }

    /// Adds a constant to Φ.
    pub fn gauge_shift(&self, c: f64) -> Self {
        Self {
            phi: self.phi.map(|p| p + c),
            ..self.clone()
        }
    }
}

/// Drift, osmotic and current velocities, one field per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFields {
    pub drift_b: Vec<GridField>,
    pub osmotic_u: Vec<GridField>,
    pub current_v: Vec<GridField>,
    /// Drift potential `φ = Φ/η + log ρ^{1/2}` for the stochastic engine.
    pub drift_potential: DriftPotential,
}

/// Everything that stays fixed along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    system: ParticleSystem,
    xi: f64,
    potential: GridField,
    floor: DensityFloor,
    renormalize: bool,
    regularization: Option<TailRegularization>,
}

/// Treatment of the far tails during time stepping.
///
/// Inside a step, each velocity component `m^{AA} ∂_AΦ` is clamped to
/// `courant · h_A / Δt`. After each step a viscosity acts where the density
/// has decayed far below its peak. Its weight is a smoothstep in
/// `log(ρ / max ρ)` between `lower` and `upper`, so above `upper` the flow is
/// untouched. `strength` is `ν Δt / h²` for the smallest spacing.
///
/// Both pieces vanish for states whose support sits inside the resolved
/// bulk. The public right-hand sides ([`Flow::fp_rhs`], [`Flow::hj_rhs`]) and
/// [`Flow::hamiltonian`] never apply them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailRegularization {
    pub courant: f64,
    pub strength: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for TailRegularization {
    fn default() -> Self {
        Self { courant: 0.5, strength: 0.1, lower: 1e-10, upper: 1e-6 }
    }
}

impl TailRegularization {
    pub fn validate(&self) -> Result<()> {
        if !(self.courant > 0.0 && self.courant <= 1.0) {
            return Err(Error::invalid("regularization.courant", format!("{} is outside (0, 1]", self.courant)));
        }
        if !(self.strength > 0.0 && self.strength <= 0.35) {
            return Err(Error::invalid("regularization.strength", format!("{} is outside (0, 0.35]", self.strength)));
        }
        if !(self.lower > 0.0 && self.lower < self.upper && self.upper < 1.0) {
            return Err(Error::invalid(
                "regularization",
                format!("thresholds must satisfy 0 < lower < upper < 1, got {} and {}", self.lower, self.upper),
            ));
        }
        Ok(())
    }

    /// `1 - smoothstep`, equal to one deep in the tail and zero in the bulk.
    fn weights(&self, rho: &GridField) -> Vec<f64> {
        let peak = rho.values().iter().fold(0.0_f64, |m, &v| m.max(v));
        let (lo, hi) = (self.lower.ln(), self.upper.ln());
        rho.values()
            .iter()
            .map(|&r| {
                let x = if r > 0.0 && peak > 0.0 { (r / peak).ln() } else { f64::NEG_INFINITY };
                let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
                1.0 - t * t * (3.0 - 2.0 * t)
            })
            .collect()
    }

    fn apply(&self, rho: &mut GridField, phi: &mut GridField) {
        let grid = rho.grid().clone();
        let w = self.weights(rho);
        let h_min = (0..grid.dim()).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
        let weighted_rho: Vec<f64> = rho.values().iter().zip(&w).map(|(r, w)| r * w).collect();
        let mut drho = vec![0.0; rho.len()];
        let mut dphi = vec![0.0; phi.len()];
        for a in 0..grid.dim() {
            let c = self.strength * h_min * h_min;
            for (o, v) in drho.iter_mut().zip(ops::d2_compact(&grid, &weighted_rho, a)) {
                *o += c * v;
            }
            for ((o, v), w) in dphi.iter_mut().zip(ops::d2_compact(&grid, phi.values(), a)).zip(&w) {
                *o += c * w * v;
            }
        }
        let r = rho.values().iter().zip(&drho).map(|(r, d)| r + d).collect();
        let p = phi.values().iter().zip(&dphi).map(|(p, d)| p + d).collect();
        *rho = GridField::from_parts_unchecked(grid.clone(), r);
        *phi = GridField::from_parts_unchecked(grid, p);
    }
}

impl Flow {
    pub fn new(system: &ParticleSystem, xi: f64, potential: &Potential, grid: &Grid) -> Result<Self> {
        let v = potential.evaluate(grid, system)?;
        Self::with_potential_field(system, xi, v)
    }

    pub fn with_potential_field(system: &ParticleSystem, xi: f64, potential: GridField) -> Result<Self> {
        infogeo::check_xi(xi)?;
        system.check_dim(potential.grid().dim())?;
        Ok(Self {
            system: system.clone(),
            xi,
            potential,
            floor: DensityFloor::default(),
            renormalize: false,
            regularization: Some(TailRegularization::default()),
        })
    }

    /// Renormalizes ρ after every step. Off by default so that norm drift
    /// stays visible in conservation reports.
    pub fn renormalizing(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }

    /// Replaces the default tail regularization; `None` runs the bare
    /// scheme.
    pub fn with_regularization(mut self, regularization: Option<TailRegularization>) -> Result<Self> {
        if let Some(r) = &regularization {
            r.validate()?;
        }
        self.regularization = regularization;
        Ok(self)
    }

    pub fn regularization(&self) -> Option<&TailRegularization> {
        self.regularization.as_ref()
    }

    fn velocity_caps(&self, grid: &Grid, dt: f64) -> Vec<f64> {
        (0..grid.dim())
            .map(|a| match &self.regularization {
                Some(r) => r.courant * grid.spacing(a) / dt,
                None => f64::INFINITY,
            })
            .collect()
    }

    pub fn with_floor(mut self, floor: DensityFloor) -> Self {
        self.floor = floor;
        self
    }

    pub fn system(&self) -> &ParticleSystem {
        &self.system
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn potential(&self) -> &GridField {
        &self.potential
    }

    fn check_state(&self, state: &CanonicalState) -> Result<()> {
        state.rho.same_grid(&self.potential)?;
        state.rho.same_grid(&state.phi)
    }

    pub fn velocities(&self, state: &CanonicalState) -> Result<VelocityFields> {
        self.check_state(state)?;
        self.floor.check(&state.rho)?;
        let grid = state.grid();
        let eta = self.system.eta();
        let clamped = self.floor.clamp(&state.rho);
        let mut b = Vec::new();
        let mut u = Vec::new();
        let mut v = Vec::new();
        for a in 0..grid.dim() {
            let inv_m = self.system.inverse_mass(a);
            let dphi = state.phi_gradient(a);
            let drho = ops::d1(grid, state.rho.values(), a);
            let va: Vec<f64> = dphi.iter().map(|d| inv_m * d).collect();
            let ua: Vec<f64> = drho
                .iter()
                .zip(clamped.values())
                .map(|(d, r)| -0.5 * eta * inv_m * d / r)
                .collect();
            let ba: Vec<f64> = va.iter().zip(&ua).map(|(v, u)| v - u).collect();
            v.push(GridField::from_parts_unchecked(grid.clone(), va));
            u.push(GridField::from_parts_unchecked(grid.clone(), ua));
            b.push(GridField::from_parts_unchecked(grid.clone(), ba));
        }
        let s = self.floor.half_log(&state.rho);
        let drift_potential = DriftPotential {
            periodic: state.phi.zip_map(&s, |p, s| p / eta + s)?,
            tilt: state.tilt.iter().map(|t| t / eta).collect(),
        };
        Ok(VelocityFields {
            drift_b: b,
            osmotic_u: u,
            current_v: v,
            drift_potential,
        })
    }

    pub fn hamiltonian(&self, state: &CanonicalState) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.hamiltonian_unchecked(state))
    }

    fn hamiltonian_unchecked(&self, state: &CanonicalState) -> f64 {
        let grid = state.grid();
        let mut kinetic = vec![0.0; grid.len()];
        for a in 0..grid.dim() {
            let dphi = state.phi_gradient(a);
            let c = 0.5 * self.system.inverse_mass(a);
            for (k, (d, r)) in kinetic.iter_mut().zip(dphi.iter().zip(state.rho.values())) {
                *k += c * r.max(0.0) * d * d;
            }
        }
        ops::sum(&kinetic) * grid.cell_volume()
            + infogeo::functional_f_unchecked(&state.rho, self.xi, &self.potential, &self.system, &self.floor)
    }

    /// `-∂_A(ρ m^{AB} ∂_B Φ)`. Round-off negatives in ρ carry no flux.
    pub fn fp_rhs(&self, state: &CanonicalState) -> Result<GridField> {
        self.check_state(state)?;
        let caps = vec![f64::INFINITY; state.grid().dim()];
        Ok(self.fp_rhs_unchecked(&state.rho, &state.phi, &state.tilt, &caps))
    }

    fn fp_rhs_unchecked(&self, rho: &GridField, phi: &GridField, tilt: &[f64], caps: &[f64]) -> GridField {
        let grid = rho.grid();
        let mut out = vec![0.0; grid.len()];
        for a in 0..grid.dim() {
            let inv_m = self.system.inverse_mass(a);
            let dphi = phi_gradient(phi, tilt, a);
            let flux: Vec<f64> = dphi
                .iter()
                .zip(rho.values())
                .map(|(d, r)| r.max(0.0) * (inv_m * d).clamp(-caps[a], caps[a]))
                .collect();
            for (o, f) in out.iter_mut().zip(ops::d1(grid, &flux, a)) {
                *o -= f;
            }
        }
        GridField::from_parts_unchecked(grid.clone(), out)
    }

    /// Drift-diffusion form `-∂_A(ρ b^A) + ½ η m^{AB} ∂_A∂_B ρ`.
    pub fn fp_rhs_drift_diffusion(&self, state: &CanonicalState) -> Result<GridField> {
        let vel = self.velocities(state)?;
        let grid = state.grid();
        let mut out = vec![0.0; grid.len()];
        for a in 0..grid.dim() {
            let flux: Vec<f64> = vel.drift_b[a]
                .values()
                .iter()
                .zip(state.rho.values())
                .map(|(b, r)| r * b)
                .collect();
            let dflux = ops::d1(grid, &flux, a);
            let drho = ops::d1(grid, state.rho.values(), a);
            let ddrho = ops::d1(grid, &drho, a);
            let c = 0.5 * self.system.eta() * self.system.inverse_mass(a);
            for i in 0..out.len() {
                out[i] += -dflux[i] + c * ddrho[i];
            }
        }
        Ok(GridField::from_parts_unchecked(grid.clone(), out))
    }

    /// Continuity form `-∂_A(ρ v^A)`.
    pub fn fp_rhs_continuity(&self, state: &CanonicalState) -> Result<GridField> {
        let vel = self.velocities(state)?;
        let grid = state.grid();
        let mut out = vec![0.0; grid.len()];
        for a in 0..grid.dim() {
            let flux: Vec<f64> = vel.current_v[a]
                .values()
                .iter()
                .zip(state.rho.values())
                .map(|(v, r)| r * v)
                .collect();
            for (o, f) in out.iter_mut().zip(ops::d1(grid, &flux, a)) {
                *o -= f;
            }
        }
        Ok(GridField::from_parts_unchecked(grid.clone(), out))
    }

    /// `-½ m^{AB} ∂_AΦ ∂_BΦ - δF/δρ`.
    pub fn hj_rhs(&self, state: &CanonicalState) -> Result<GridField> {
        self.check_state(state)?;
        self.floor.check(&state.rho)?;
        let caps = vec![f64::INFINITY; state.grid().dim()];
        Ok(self.hj_rhs_unchecked(&state.rho, &state.phi, &state.tilt, &caps))
    }

    fn hj_rhs_unchecked(&self, rho: &GridField, phi: &GridField, tilt: &[f64], caps: &[f64]) -> GridField {
        let grid = rho.grid();
        let q = infogeo::quantum_potential_unchecked(rho, self.xi, &self.potential, &self.system, &self.floor);
        let mut out: Vec<f64> = q.values().iter().map(|q| -q).collect();
        for a in 0..grid.dim() {
            let m = self.system.axis_mass(a);
            let inv_m = self.system.inverse_mass(a);
            for (o, d) in out.iter_mut().zip(phi_gradient(phi, tilt, a)) {
                let v = (inv_m * d).clamp(-caps[a], caps[a]);
                *o -= 0.5 * m * v * v;
            }
        }
        GridField::from_parts_unchecked(grid.clone(), out)
    }

    /// `P_A = ∫ ρ ∂_A Φ`.
    pub fn momentum(&self, state: &CanonicalState) -> Vec<f64> {
        momentum(state)
    }

    /// One RK4 step.
    pub fn step(&self, state: &CanonicalState, dt: f64) -> Result<CanonicalState> {
        self.check_state(state)?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("{dt} is not strictly positive")));
        }
        self.step_unchecked(state, dt, 0)
    }

    fn step_unchecked(&self, state: &CanonicalState, dt: f64, index: usize) -> Result<CanonicalState> {
        let caps = self.velocity_caps(state.grid(), dt);
        let rhs = |rho: &GridField, phi: &GridField| {
            (
                self.fp_rhs_unchecked(rho, phi, &state.tilt, &caps),
                self.hj_rhs_unchecked(rho, phi, &state.tilt, &caps),
            )
        };
        let axpy = |x: &GridField, k: &GridField, c: f64| {
            GridField::from_parts_unchecked(
                x.grid().clone(),
                x.values().iter().zip(k.values()).map(|(x, k)| x + c * k).collect(),
            )
        };
        let (r0, p0) = (&state.rho, &state.phi);
        let (k1r, k1p) = rhs(r0, p0);
        let (k2r, k2p) = rhs(&axpy(r0, &k1r, 0.5 * dt), &axpy(p0, &k1p, 0.5 * dt));
        let (k3r, k3p) = rhs(&axpy(r0, &k2r, 0.5 * dt), &axpy(p0, &k2p, 0.5 * dt));
        let (k4r, k4p) = rhs(&axpy(r0, &k3r, dt), &axpy(p0, &k3p, dt));
        let combine = |x: &GridField, k1: &GridField, k2: &GridField, k3: &GridField, k4: &GridField| {
            let v: Vec<f64> = (0..x.len())
                .map(|i| {
                    x.values()[i]
                        + dt / 6.0
                            * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i])
                })
                .collect();
            GridField::from_parts_unchecked(x.grid().clone(), v)
        };
        let mut rho = combine(r0, &k1r, &k2r, &k3r, &k4r);
        let mut phi = combine(p0, &k1p, &k2p, &k3p, &k4p);
        if let Some(r) = &self.regularization {
            r.apply(&mut rho, &mut phi);
        }
        if rho.values().iter().chain(phi.values()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: index });
        }
        let eps = self.floor.value(&rho);
        let negative = rho.values().iter().filter(|&&r| r < -infogeo::RESOLVED_FACTOR * eps).count();
        if negative > 0 {
            return Err(Error::NegativeDensity { count: negative });
        }
        if self.renormalize {
            rho = rho.normalized().map_err(|_| Error::Divergence { step: index })?;
        }
        Ok(CanonicalState::unchecked(rho, phi, state.tilt.clone(), state.time + dt))
    }

    /// Runs `steps` RK4 steps, keeping every `every`-th state (and the last).
    pub fn evolve(
        &self,
        state: &CanonicalState,
        dt: f64,
        steps: usize,
        every: usize,
    ) -> Result<Vec<CanonicalState>> {
        self.check_state(state)?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("{dt} is not strictly positive")));
        }
        let every = every.max(1);
        let mut out = vec![state.clone()];
        let mut cur = state.clone();
        for n in 1..=steps {
            cur = self.step_unchecked(&cur, dt, n)?;
            if n % every == 0 || n == steps {
                out.push(cur.clone());
            }
        }
        Ok(out)
    }

    pub fn conservation_report(&self, trajectory: &[CanonicalState]) -> Result<ConservationReport> {
        if trajectory.len() < 2 {
            return Err(Error::invalid("trajectory", "needs at least two states"));
        }
        for s in trajectory {
            self.check_state(s)?;
        }
        let rows: Vec<ConservationRow> = trajectory
            .iter()
            .map(|s| ConservationRow {
                t: s.time,
                norm: s.norm(),
                hamiltonian: self.hamiltonian_unchecked(s),
                momentum: momentum(s),
            })
            .collect();
        let first = &rows[0];
        let h_scale = first.hamiltonian.abs().max(f64::MIN_POSITIVE);
        let p_scale = match momentum_scale(&trajectory[0]) {
            s if s > 0.0 => s,
            _ => 1.0,
        };
        let max_over = |f: &dyn Fn(&ConservationRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
        Ok(ConservationReport {
            max_norm_drift: max_over(&|r| (r.norm - first.norm).abs()),
            max_hamiltonian_drift: max_over(&|r| (r.hamiltonian - first.hamiltonian).abs()) / h_scale,
            max_momentum_drift: (0..first.momentum.len())
                .map(|a| max_over(&|r| (r.momentum[a] - first.momentum[a]).abs()) / p_scale)
                .collect(),
            rows,
        })
    }
}

/// `P_A = ∫ ρ ∂_A Φ`.
pub fn momentum(state: &CanonicalState) -> Vec<f64> {
    let grid = state.grid();
    (0..grid.dim())
        .map(|a| {
            let d = state.phi_gradient(a);
            let t: Vec<f64> = d.iter().zip(state.rho.values()).map(|(d, r)| d * r).collect();
            ops::sum(&t) * grid.cell_volume()
        })
        .collect()
}

/// RMS momentum `sqrt(∫ρ |∇Φ|²)`. Momentum drift is reported relative to
/// this scale, or in absolute terms when it vanishes.
pub fn momentum_scale(state: &CanonicalState) -> f64 {
    let grid = state.grid();
    let mut acc = vec![0.0; grid.len()];
    for a in 0..grid.dim() {
        for (o, (d, r)) in acc
            .iter_mut()
            .zip(state.phi_gradient(a).iter().zip(state.rho.values()))
        {
            *o += r * d * d;
        }
    }
    (ops::sum(&acc) * grid.cell_volume()).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationRow {
    pub t: f64,
    pub norm: f64,
    pub hamiltonian: f64,
    pub momentum: Vec<f64>,
}

/// Time series of the conserved quantities with their maximum drifts.
/// The H drift is relative to `|H(0)|`; the momentum drift is relative to
/// the RMS momentum of the initial state, or absolute when that is zero;
/// the norm drift is absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub rows: Vec<ConservationRow>,
    pub max_norm_drift: f64,
    pub max_hamiltonian_drift: f64,
    pub max_momentum_drift: Vec<f64>,
}

impl ConservationReport {
    /// CSV with header `t,norm,H,P_0,...`.
    pub fn to_csv(&self) -> String {
        let d = self.rows.first().map_or(0, |r| r.momentum.len());
        let mut s = String::from("t,norm,H");
        for a in 0..d {
            s.push_str(&format!(",P_{a}"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{:e},{:e},{:e}", r.t, r.norm, r.hamiltonian));
            for p in &r.momentum {
                s.push_str(&format!(",{p:e}"));
            }
            s.push('\n');
        }
        s
    }
}

/// A functional of the canonical state with optional functional derivatives.
pub trait Functional {
    fn name(&self) -> String;
    fn value(&self, state: &CanonicalState) -> Result<f64>;
    /// `(δ/δρ, δ/δΦ)`.
    fn derivatives(&self, state: &CanonicalState) -> Result<(GridField, GridField)> {
        let _ = state;
        Err(Error::MissingDerivative(self.name()))
    }
}

/// The ensemble Hamiltonian as a bracket handle.
pub struct HamiltonianFunctional<'a>(pub &'a Flow);

impl Functional for HamiltonianFunctional<'_> {
    fn name(&self) -> String {
        "H".into()
    }

    fn value(&self, state: &CanonicalState) -> Result<f64> {
        self.0.hamiltonian(state)
    }

    fn derivatives(&self, state: &CanonicalState) -> Result<(GridField, GridField)> {
        let d_rho = self.0.hj_rhs(state)?.scale(-1.0);
        Ok((d_rho, self.0.fp_rhs(state)?))
    }
}

/// `P_A = ∫ρ ∂_AΦ`, the generator of translations along axis `A`.
pub struct MomentumFunctional {
    pub axis: usize,
}

impl Functional for MomentumFunctional {
    fn name(&self) -> String {
        format!("P_{}", self.axis)
    }

    fn value(&self, state: &CanonicalState) -> Result<f64> {
        momentum(state)
            .get(self.axis)
            .copied()
            .ok_or_else(|| Error::DimensionMismatch(format!("no axis {}", self.axis)))
    }

    fn derivatives(&self, state: &CanonicalState) -> Result<(GridField, GridField)> {
        if self.axis >= state.grid().dim() {
            return Err(Error::DimensionMismatch(format!("no axis {}", self.axis)));
        }
        let d_rho = GridField::from_parts_unchecked(state.grid().clone(), state.phi_gradient(self.axis));
        let d_phi = ops::gradient(&state.rho, self.axis)?.scale(-1.0);
        Ok((d_rho, d_phi))
    }
}

/// `∫ ρ w` for a fixed weight field.
pub struct DensityMoment {
    pub weight: GridField,
}

impl Functional for DensityMoment {
    fn name(&self) -> String {
        "density moment".into()
    }

    fn value(&self, state: &CanonicalState) -> Result<f64> {
        ops::inner(&state.rho, &self.weight)
    }

    fn derivatives(&self, state: &CanonicalState) -> Result<(GridField, GridField)> {
        state.rho.same_grid(&self.weight)?;
        Ok((self.weight.clone(), GridField::zeros(state.grid())))
    }
}

/// `{f, g} = ∫ (δf/δρ δg/δΦ - δf/δΦ δg/δρ)`.
pub fn poisson_bracket(f: &dyn Functional, g: &dyn Functional, state: &CanonicalState) -> Result<f64> {
    let (f_rho, f_phi) = f.derivatives(state)?;
    let (g_rho, g_phi) = g.derivatives(state)?;
    Ok(ops::inner(&f_rho, &g_phi)? - ops::inner(&f_phi, &g_rho)?)
}

/// A space-time perturbation `(δρ_n, δΦ_n)` aligned with the states of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPerturbation {
    pub rho: Vec<GridField>,
    pub phi: Vec<GridField>,
}

impl PathPerturbation {
    pub fn zeros(path: &[CanonicalState]) -> Self {
        Self {
            rho: path.iter().map(|s| GridField::zeros(s.grid())).collect(),
            phi: path.iter().map(|s| GridField::zeros(s.grid())).collect(),
        }
    }

    /// Space-time L2 norm `sqrt(Σ_n Δt ∫ (δρ_n² + δΦ_n²))` with `Δt` taken
    /// from the path.
    pub fn norm(&self, path: &[CanonicalState]) -> f64 {
        let dt = path_dt(path);
        let s: f64 = self
            .rho
            .iter()
            .chain(&self.phi)
            .map(|f| ops::inner(f, f).unwrap_or(0.0))
            .sum();
        (s * dt).sqrt()
    }
}

fn path_dt(path: &[CanonicalState]) -> f64 {
    if path.len() < 2 {
        return 0.0;
    }
    (path[path.len() - 1].time - path[0].time) / (path.len() - 1) as f64
}

impl Flow {
    /// Midpoint discretization of `A = ∫dt (∫Φ ∂_tρ - H)`:
    /// `Σ_n [⟨Φ̄_n, ρ_{n+1} - ρ_n⟩ - Δt H(ρ̄_n, Φ̄_n)]`.
    pub fn discrete_action(&self, path: &[CanonicalState]) -> Result<f64> {
        let mut total = 0.0;
        for w in path.windows(2) {
            let dt = w[1].time - w[0].time;
            let rho_mid = w[0].rho.add(&w[1].rho)?.scale(0.5);
            let phi_mid = w[0].phi.add(&w[1].phi)?.scale(0.5);
            let drho = w[1].rho.sub(&w[0].rho)?;
            let mid = CanonicalState::unchecked(rho_mid, phi_mid, w[0].tilt.clone(), 0.5 * (w[0].time + w[1].time));
            let full_phi = GridField::from_parts_unchecked(mid.grid().clone(), mid.phi_values());
            total += ops::inner(&full_phi, &drho)? - dt * self.hamiltonian_unchecked(&mid);
        }
        Ok(total)
    }

    /// `(A[path + ε δ] - A[path - ε δ]) / 2ε`.
    pub fn action_residual(
        &self,
        path: &[CanonicalState],
        perturbation: &PathPerturbation,
        epsilon: f64,
    ) -> Result<f64> {
        if path.len() < 3 {
            return Err(Error::invalid("path", "needs at least three states"));
        }
        if perturbation.rho.len() != path.len() || perturbation.phi.len() != path.len() {
            return Err(Error::DimensionMismatch("perturbation length differs from path".into()));
        }
        let last = path.len() - 1;
        let at_ends = [0, last].iter().any(|&n| {
            perturbation.rho[n].sup_norm() != 0.0 || perturbation.phi[n].sup_norm() != 0.0
        });
        if at_ends {
            return Err(Error::PerturbationAtEndpoints);
        }
        if perturbation.rho.iter().chain(&perturbation.phi).all(|f| f.sup_norm() == 0.0) {
            return Ok(0.0);
        }
        let shifted = |sign: f64| -> Result<Vec<CanonicalState>> {
            path.iter()
                .enumerate()
                .map(|(n, s)| {
                    Ok(CanonicalState::unchecked(
                        s.rho.add(&perturbation.rho[n].scale(sign * epsilon))?,
                        s.phi.add(&perturbation.phi[n].scale(sign * epsilon))?,
                        s.tilt.clone(),
                        s.time,
                    ))
                })
                .collect()
        };
        let plus = self.discrete_action(&shifted(1.0)?)?;
        let minus = self.discrete_action(&shifted(-1.0)?)?;
        Ok((plus - minus) / (2.0 * epsilon))
    }
}

pub fn ensemble_hamiltonian(
    state: &CanonicalState,
    xi: f64,
    potential: &Potential,
    system: &ParticleSystem,
) -> Result<f64> {
    Flow::new(system, xi, potential, state.grid())?.hamiltonian(state)
}

pub fn velocities(state: &CanonicalState, system: &ParticleSystem) -> Result<VelocityFields> {
    Flow::new(system, 0.0, &Potential::Free, state.grid())?.velocities(state)
}

pub fn fp_rhs(state: &CanonicalState, system: &ParticleSystem) -> Result<GridField> {
    Flow::new(system, 0.0, &Potential::Free, state.grid())?.fp_rhs(state)
}

pub fn hj_rhs(
    state: &CanonicalState,
    xi: f64,
    potential: &Potential,
    system: &ParticleSystem,
) -> Result<GridField> {
    Flow::new(system, xi, potential, state.grid())?.hj_rhs(state)
}
