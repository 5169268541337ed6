//! Browser bindings for three small edlab experiments:
//! a wave packet under the ensemble Hamiltonian flow, a cloud of walkers
//! drifting with the current velocity, and the nonlinear term that vanishes
//! at the regraduated phase scale.

use edlab::ensemble::cell_average;
use edlab::infogeo::gaussian_density;
use edlab::wave::{compose_psi, ground_state, regraduate};
use edlab::{CanonicalState, Flow, Grid, GridField, ParticleSystem, Potential, SchrodingerSolver, WalkerEnsemble};
use wasm_bindgen::prelude::*;

const POINTS: usize = 256;
const LENGTH: f64 = 20.0;

fn js(err: edlab::Error) -> JsError {
    JsError::new(&err.to_string())
}

fn potential_named(name: &str) -> edlab::Result<Potential> {
    match name {
        "free" => Ok(Potential::Free),
        "harmonic" => Ok(Potential::harmonic(0.5)),
        "barrier" => Ok(Potential::Barrier {
            height: 2.0,
            width: 0.5,
            center: 0.0,
        }),
        "double-well" => Ok(Potential::DoubleWell {
            separation: 4.0,
            depth: 1.5,
        }),
        other => Err(edlab::Error::InvalidParameter {
            name: "potential",
            reason: format!("unknown potential `{other}`"),
        }),
    }
}

/// A Gaussian packet evolved by the `(ρ, Φ)` flow.
#[wasm_bindgen]
pub struct Packet {
    flow: Flow,
    state: CanonicalState,
    dt: f64,
}

impl Packet {
    pub fn create(potential: &str, x0: f64, sigma: f64, momentum: f64) -> edlab::Result<Self> {
        let grid = Grid::line(POINTS, LENGTH)?;
        let system = ParticleSystem::single(1.0, 1.0)?;
        let flow = Flow::new(&system, 0.125, &potential_named(potential)?, &grid)?;
        let rho = gaussian_density(&grid, &[x0], &[sigma])?;
        let state = CanonicalState::new(rho, GridField::zeros(&grid), 0.0)?.with_tilt(vec![momentum])?;
        Ok(Self { flow, state, dt: 1e-3 })
    }

    pub fn run(&mut self, steps: usize) -> edlab::Result<()> {
        let path = self.flow.evolve(&self.state, self.dt, steps, steps.max(1))?;
        self.state = path.last().cloned().unwrap_or_else(|| self.state.clone());
        Ok(())
    }

    pub fn energy(&self) -> edlab::Result<f64> {
        self.flow.hamiltonian(&self.state)
    }
}

#[wasm_bindgen]
impl Packet {
    /// `potential` is one of `free`, `harmonic`, `barrier`, `double-well`.
    #[wasm_bindgen(constructor)]
    pub fn new(potential: &str, x0: f64, sigma: f64, momentum: f64) -> Result<Packet, JsError> {
        Self::create(potential, x0, sigma, momentum).map_err(js)
    }

    pub fn advance(&mut self, steps: usize) -> Result<(), JsError> {
        self.run(steps).map_err(js)
    }

    pub fn density(&self) -> Vec<f64> {
        self.state.rho.values().to_vec()
    }

    pub fn potential(&self) -> Vec<f64> {
        self.flow.potential().values().to_vec()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.state.grid().axis_coordinates(0)
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn hamiltonian(&self) -> Result<f64, JsError> {
        self.energy().map_err(js)
    }
}

/// Histogram of walkers started in the harmonic ground state and moved
/// `steps` times by the coupled kernel, followed by the ground-state
/// density averaged over the same cells.
pub fn walker_cloud(walkers: usize, steps: usize, dt: f64, bins: usize, seed: u64) -> edlab::Result<Vec<f64>> {
    let system = ParticleSystem::single(1.0, 1.0)?;
    let grid = Grid::line(POINTS, LENGTH / 2.0)?;
    let ground = ground_state(&system, &Potential::harmonic(1.0), &grid, 1.0)?;
    let state = CanonicalState::new(ground.rho.clone(), GridField::zeros(&grid), 0.0)?;
    let mut cloud = WalkerEnsemble::sample_density(&system, &ground.rho, walkers, seed)?;
    for _ in 0..steps {
        cloud = cloud.evolve_coupled(&state, dt)?;
    }
    let cells = Grid::line(bins, LENGTH / 2.0)?;
    let mut out = cloud.estimate_density(&cells)?.rho.values().to_vec();
    out.extend_from_slice(cell_average(&ground.rho, &cells)?.values());
    Ok(out)
}

#[wasm_bindgen(js_name = walkerCloud)]
pub fn walker_cloud_js(walkers: usize, steps: usize, dt: f64, bins: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    walker_cloud(walkers, steps, dt, bins, seed).map_err(js)
}

/// L2 distance between the harmonic ground state and its nonlinear
/// evolution when the phase scale is `ratio` times the regraduated one.
pub fn nonlinear_gap(ratio: f64, steps: usize) -> edlab::Result<f64> {
    let xi = 0.125;
    let system = ParticleSystem::single(1.0, 1.0)?;
    let grid = Grid::line(POINTS, 16.0)?;
    let potential = Potential::harmonic(1.0);
    let r = regraduate(xi, 1.0)?;
    let ground = ground_state(&system, &potential, &grid, r.hbar)?;
    let state = CanonicalState::new(ground.rho.clone(), GridField::zeros(&grid), 0.0)?;
    let psi = compose_psi(&state, ratio * r.k_hat, 1.0)?;
    let solver = SchrodingerSolver::new(&system, &potential, &grid)?;
    solver.evolve_nonlinear(&psi, xi, 1e-3, steps)?.density().l2_distance(&ground.rho)
}

#[wasm_bindgen(js_name = nonlinearGap)]
pub fn nonlinear_gap_js(ratio: f64, steps: usize) -> Result<f64, JsError> {
    nonlinear_gap(ratio, steps).map_err(js)
}
