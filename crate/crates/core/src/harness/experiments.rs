use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::config::{DensitySpec, PhaseSpec, ScenarioConfig};
use super::report::{Metric, RunReport};
use super::{Artifact, Experiment, HarnessError, Run};
use crate::ensemble::{
    cell_average, coupled_kernel, empirical_moments, empirical_moments_about_drift, loglog_slope, trajectory_header,
    WalkerEnsemble,
};
use crate::error::Error;
use crate::flow::{CanonicalState, Flow};
use crate::grid::{Grid, GridField, WaveField};
use crate::infogeo::{
    fisher_matrix, functional_f, gaussian_density, information_metric_closed, information_metric_mc, quantum_potential,
    quantum_potential_rho_form, MIN_METRIC_SAMPLES,
};
use crate::maxent::{DriftPotential, TransitionKernel};
use crate::potential::Potential;
use crate::system::ParticleSystem;
use crate::wave::{
    compose_psi, decompose_psi, ground_state, nonlinear_coefficient, phase_winding_psi, regraduate, snapshot_csv,
    SchrodingerSolver,
};

/// Samples used for metric estimates when the config has no ensemble.
const DEFAULT_METRIC_SAMPLES: usize = 100_000;

/// Runs one experiment. The returned report's verdict carries tolerance
/// failures; errors are reserved for bad input and numerical breakdown.
pub fn run_experiment(config: &ScenarioConfig, experiment: Experiment, seed: Option<u64>) -> Result<Run, HarnessError> {
    let mut config = config.clone().resolved()?;
    if let (Some(seed), Some(e)) = (seed, config.ensemble.as_mut()) {
        e.master_seed = seed;
    }
    let seed = seed
        .or_else(|| config.ensemble.as_ref().map(|e| e.master_seed))
        .unwrap_or(0);
    let setup = Setup::new(&config, experiment, seed)?;
    let outcome = match experiment {
        Experiment::Equivalence => equivalence(&setup),
        Experiment::StochasticVsFp => stochastic_vs_fp(&setup),
        Experiment::Conservation => conservation(&setup),
        Experiment::ScalingSweep => scaling_sweep(&setup),
        Experiment::Infogeo => infogeo(&setup),
        Experiment::Regraduation => regraduation(&setup),
        Experiment::Winding => winding(&setup),
    }?;
    let mut parameters = BTreeMap::from([
        ("xi".to_string(), setup.xi),
        ("eta".to_string(), setup.eta),
        ("k".to_string(), setup.k),
        ("c".to_string(), config.c()),
    ]);
    if let Some(k_hat) = config.k_hat() {
        parameters.insert("k_hat".to_string(), k_hat);
        parameters.insert("hbar".to_string(), setup.eta / setup.k);
    }
    let names = outcome.artifacts.iter().map(|a| a.name.clone()).collect();
    let report = RunReport::new(&config, experiment, seed, parameters, outcome.metrics, names)?;
    Ok(Run {
        report,
        artifacts: outcome.artifacts,
    })
}

struct Outcome {
    metrics: Vec<Metric>,
    artifacts: Vec<Artifact>,
}

fn artifact(name: &str, contents: String) -> Artifact {
    Artifact {
        name: name.to_string(),
        contents,
    }
}

struct Setup<'a> {
    config: &'a ScenarioConfig,
    experiment: Experiment,
    system: ParticleSystem,
    grid: Grid,
    potential: Potential,
    start: CanonicalState,
    xi: f64,
    eta: f64,
    k: f64,
    dt: f64,
    steps: usize,
    every: usize,
    seed: u64,
}

impl<'a> Setup<'a> {
    fn new(config: &'a ScenarioConfig, experiment: Experiment, seed: u64) -> Result<Self, HarnessError> {
        let core = |e: Error| HarnessError::from_core(e, experiment);
        let s = &config.system;
        let system = ParticleSystem::new(s.masses.clone(), s.eta, s.spatial_dim).map_err(core)?;
        let grid = config.build_grid()?;
        let xi = config.xi();
        let rho = match &config.initial.density {
            DensitySpec::Gaussian { mean, sigma } => gaussian_density(&grid, mean, sigma).map_err(core)?,
            DensitySpec::Uniform => GridField::constant(&grid, 1.0 / grid.volume()),
            DensitySpec::GroundState => {
                ground_state(&system, &config.potential, &grid, (8.0 * xi).sqrt())
                    .map_err(core)?
                    .rho
            }
        };
        let (phi, tilt) = match &config.initial.phase {
            PhaseSpec::Zero => (GridField::zeros(&grid), vec![0.0; grid.dim()]),
            PhaseSpec::PlaneWave { p } => (GridField::zeros(&grid), p.clone()),
            PhaseSpec::CustomTable { values } => {
                (GridField::new(grid.clone(), values.clone()).map_err(core)?, vec![0.0; grid.dim()])
            }
        };
        let start = CanonicalState::new(rho, phi, 0.0)
            .and_then(|st| st.with_tilt(tilt))
            .map_err(core)?;
        Ok(Self {
            config,
            experiment,
            system,
            grid,
            potential: config.potential.clone(),
            start,
            xi,
            eta: s.eta,
            k: config.k(),
            dt: config.dynamics.dt,
            steps: config.dynamics.steps,
            every: config.output_every(),
            seed,
        })
    }

    fn core(&self, e: Error) -> HarnessError {
        HarnessError::from_core(e, self.experiment)
    }

    /// As [`Setup::core`], shifting a divergence step by `offset` steps
    /// already taken.
    fn core_at(&self, e: Error, offset: usize) -> HarnessError {
        match e {
            Error::Divergence { step } => self.core(Error::Divergence { step: step + offset }),
            other => self.core(other),
        }
    }

    fn requirement(&self, path: &str, message: &str) -> HarnessError {
        HarnessError::Validation {
            path: path.to_string(),
            message: format!("{} {message}", self.experiment.name()),
        }
    }

    fn ensemble(&self) -> Result<&super::config::EnsembleSpec, HarnessError> {
        self.config
            .ensemble
            .as_ref()
            .ok_or_else(|| self.requirement("ensemble", "needs an ensemble section"))
    }

    /// Reference point for one-step statistics: the Gaussian mean, or the
    /// grid point nearest the origin.
    fn anchor(&self) -> Vec<f64> {
        match &self.config.initial.density {
            DensitySpec::Gaussian { mean, .. } => mean.clone(),
            _ => self.grid.point(self.grid.origin_index()),
        }
    }

    /// Fixed drift potential `φ = Φ/η` of the initial state.
    fn drift_potential(&self) -> DriftPotential {
        DriftPotential {
            periodic: self.start.phi.scale(1.0 / self.eta),
            tilt: self.start.tilt.iter().map(|t| t / self.eta).collect(),
        }
    }

    fn solver(&self) -> Result<SchrodingerSolver, HarnessError> {
        SchrodingerSolver::new(&self.system, &self.potential, &self.grid).map_err(|e| self.core(e))
    }

    /// Advances `psi` by `n` steps, using the linear scheme when the
    /// nonlinear coefficient vanishes.
    fn advance(&self, solver: &SchrodingerSolver, psi: &WaveField, n: usize, done: usize) -> Result<WaveField, HarnessError> {
        let linear = self.xi > 0.0 && nonlinear_coefficient(psi.k(), self.xi, self.eta) == 0.0;
        let out = if linear {
            solver.evolve_linear(psi, self.dt, n)
        } else {
            solver.evolve_nonlinear(psi, self.xi, self.dt, n)
        };
        out.map_err(|e| self.core_at(e, done))
    }

    fn chunks(&self) -> impl Iterator<Item = (usize, usize)> {
        let (steps, every) = (self.steps, self.every);
        (0..steps.div_ceil(every)).map(move |c| {
            let done = c * every;
            (done, every.min(steps - done))
        })
    }

    fn initial_psi(&self, k: f64) -> Result<WaveField, HarnessError> {
        compose_psi(&self.start, k, self.eta).map_err(|e| self.core(e))
    }

    fn sample_initial(&self, walkers: usize) -> Result<WalkerEnsemble, HarnessError> {
        let out = match &self.config.initial.density {
            DensitySpec::Gaussian { mean, sigma } => {
                WalkerEnsemble::sample_gaussian(&self.system, &self.grid, mean, sigma, walkers, self.seed)
            }
            _ => WalkerEnsemble::sample_density(&self.system, &self.start.rho, walkers, self.seed),
        };
        out.map_err(|e| self.core(e))
    }
}

fn equivalence(s: &Setup) -> Result<Outcome, HarnessError> {
    let tol = &s.config.tolerances;
    let flow = Flow::new(&s.system, s.xi, &s.potential, &s.grid).map_err(|e| s.core(e))?;
    let solver = s.solver()?;
    let mut psi = s.initial_psi(s.k)?;
    let mut state = s.start.clone();
    let norm0 = state.norm();
    let gap0 = state.rho.l2_distance(&psi.density()).map_err(|e| s.core(e))?;
    let mut csv = format!("t,density_l2_gap,flow_norm,wave_norm\n0e0,{gap0:e},{norm0:e},{:e}\n", psi.norm());
    let (mut worst_gap, mut norm_drift) = (gap0, 0.0_f64);
    for (done, n) in s.chunks() {
        state = flow
            .evolve(&state, s.dt, n, n)
            .map_err(|e| s.core_at(e, done))?
            .pop()
            .expect("trajectory holds the final state");
        psi = s.advance(&solver, &psi, n, done)?;
        let gap = state.rho.l2_distance(&psi.density()).map_err(|e| s.core(e))?;
        worst_gap = worst_gap.max(gap);
        norm_drift = norm_drift.max((state.norm() - norm0).abs());
        csv.push_str(&format!("{:e},{gap:e},{:e},{:e}\n", state.time, state.norm(), psi.norm()));
    }
    Ok(Outcome {
        metrics: vec![
            Metric::at_most("density_l2_gap", worst_gap, tol.density_l2_gap),
            Metric::at_most("norm_drift", norm_drift, tol.norm_drift),
        ],
        artifacts: vec![
            artifact("equivalence.csv", csv),
            artifact("wave_final.csv", snapshot_csv(&psi).map_err(|e| s.core(e))?),
        ],
    })
}

fn conservation(s: &Setup) -> Result<Outcome, HarnessError> {
    let tol = &s.config.tolerances;
    let flow = Flow::new(&s.system, s.xi, &s.potential, &s.grid).map_err(|e| s.core(e))?;
    let trajectory = flow.evolve(&s.start, s.dt, s.steps, s.every).map_err(|e| s.core(e))?;
    let report = flow.conservation_report(&trajectory).map_err(|e| s.core(e))?;
    let mut metrics = vec![
        Metric::at_most("norm_drift", report.max_norm_drift, tol.norm_drift),
        Metric::at_most("hamiltonian_drift", report.max_hamiltonian_drift, tol.hamiltonian_drift),
    ];
    if s.potential.is_free() {
        let p = report.max_momentum_drift.iter().fold(0.0_f64, |m, v| m.max(*v));
        metrics.push(Metric::at_most("momentum_drift", p, tol.momentum_drift));
    }
    Ok(Outcome {
        metrics,
        artifacts: vec![artifact("conservation.csv", report.to_csv())],
    })
}

fn z_score(value: f64, expected: f64, se: f64) -> f64 {
    let diff = (value - expected).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / se
    }
}

fn stochastic_vs_fp(s: &Setup) -> Result<Outcome, HarnessError> {
    let tol = &s.config.tolerances;
    let ens = s.ensemble()?;
    let bins = Grid::new(vec![ens.bins; s.grid.dim()], s.grid.lengths().to_vec()).map_err(|e| s.core(e))?;

    let x0 = s.anchor();
    let kernel = coupled_kernel(&s.system, &s.start, s.dt).map_err(|e| s.core(e))?;
    let before = WalkerEnsemble::at_point(&s.system, &s.grid, &x0, ens.walkers, s.seed.wrapping_add(1))
        .map_err(|e| s.core(e))?;
    let after = before.sample_step(&kernel).map_err(|e| s.core(e))?;
    let m = empirical_moments(&before, &after).map_err(|e| s.core(e))?;
    let expected = kernel.mean_at(&x0);
    let (mut z_mean, mut z_var) = (0.0_f64, 0.0_f64);
    for a in 0..s.grid.dim() {
        z_mean = z_mean.max(z_score(m.empirical_mean[a], expected[a], m.standard_errors[a]));
        z_var = z_var.max(z_score(m.empirical_cov[a], kernel.variance()[a], m.cov_standard_errors[a]));
    }

    let solver = s.solver()?;
    let mut psi = s.initial_psi(s.k)?;
    let mut walkers = s.sample_initial(ens.walkers)?;
    let mut csv = String::from("t,histogram_l1\n");
    let mut worst = 0.0_f64;
    let mut hist = walkers.estimate_density(&bins).map_err(|e| s.core(e))?.rho;
    for step in 1..=s.steps {
        let state = decompose_psi(&psi).map_err(|e| s.core(e))?.state;
        walkers = walkers.evolve_coupled(&state, s.dt).map_err(|e| s.core_at(e, step - 1))?;
        psi = s.advance(&solver, &psi, 1, step - 1)?;
        if step % s.every == 0 || step == s.steps {
            hist = walkers.estimate_density(&bins).map_err(|e| s.core(e))?.rho;
            let reference = cell_average(&psi.density(), &bins).map_err(|e| s.core(e))?;
            let l1 = hist.l1_distance(&reference).map_err(|e| s.core(e))?;
            worst = worst.max(l1);
            csv.push_str(&format!("{:e},{l1:e}\n", step as f64 * s.dt));
        }
    }
    let mut positions = trajectory_header(s.grid.dim());
    positions.push_str(&walkers.trajectory_rows());
    Ok(Outcome {
        metrics: vec![
            Metric::at_most("histogram_l1", worst, tol.histogram_l1),
            Metric::at_most("drift_z_score", z_mean, tol.z_score),
            Metric::at_most("variance_z_score", z_var, tol.z_score),
        ],
        artifacts: vec![
            artifact("stochastic_vs_fp.csv", csv),
            artifact("histogram_final.csv", hist.to_csv()),
            artifact("walkers_final.csv", positions),
        ],
    })
}

fn scaling_sweep(s: &Setup) -> Result<Outcome, HarnessError> {
    let tol = &s.config.tolerances;
    let ens = s.ensemble()?;
    let drift = s.drift_potential();
    let x0 = s.anchor();
    let step = |dt: f64, seed: u64| -> Result<_, HarnessError> {
        let kernel = TransitionKernel::new(&s.system, &drift, dt).map_err(|e| s.core(e))?;
        let before =
            WalkerEnsemble::at_point(&s.system, &s.grid, &x0, ens.walkers, seed).map_err(|e| s.core(e))?;
        let after = before.sample_step(&kernel).map_err(|e| s.core(e))?;
        let m = empirical_moments_about_drift(&before, &after, &kernel).map_err(|e| s.core(e))?;
        Ok((kernel, m))
    };

    let (kernel, m) = step(s.dt, s.seed)?;
    let expected = kernel.mean_at(&x0);
    let (mut z_mean, mut z_var) = (0.0_f64, 0.0_f64);
    for a in 0..s.grid.dim() {
        z_mean = z_mean.max(z_score(m.empirical_mean[a], expected[a], m.standard_errors[a]));
        z_var = z_var.max(z_score(m.empirical_cov[a], kernel.variance()[a], m.cov_standard_errors[a]));
    }

    let dts = s.config.sweep_dts();
    let mut drifts = Vec::new();
    let mut fluctuations = Vec::new();
    let mut csv = String::from("dt,drift,fluctuation\n");
    for (i, &dt) in dts.iter().enumerate() {
        let (_, m) = step(dt, s.seed.wrapping_add(1 + i as u64))?;
        let drift = m.empirical_mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        let fluct = m.empirical_cov.iter().sum::<f64>().sqrt();
        csv.push_str(&format!("{dt:e},{drift:e},{fluct:e}\n"));
        drifts.push(drift);
        fluctuations.push(fluct);
    }
    let drift_slope = loglog_slope(&dts, &drifts).unwrap_or(f64::NAN);
    let fluct_slope = loglog_slope(&dts, &fluctuations).unwrap_or(f64::NAN);
    Ok(Outcome {
        metrics: vec![
            Metric::near("drift_exponent", drift_slope, 1.0, tol.exponent),
            Metric::near("fluctuation_exponent", fluct_slope, 0.5, tol.exponent),
            Metric::at_most("drift_z_score", z_mean, tol.z_score),
            Metric::at_most("variance_z_score", z_var, tol.z_score),
        ],
        artifacts: vec![artifact("scaling_sweep.csv", csv)],
    })
}

fn infogeo(s: &Setup) -> Result<Outcome, HarnessError> {
    let tol = &s.config.tolerances;
    let samples = s.config.ensemble.as_ref().map_or(DEFAULT_METRIC_SAMPLES, |e| e.walkers);
    if samples < MIN_METRIC_SAMPLES {
        return Err(s.requirement("ensemble.walkers", &format!("needs at least {MIN_METRIC_SAMPLES} samples")));
    }
    let c = s.config.c();
    let drift = s.drift_potential();
    let x0 = s.anchor();
    let dim = s.grid.dim();

    let kernel = TransitionKernel::new(&s.system, &drift, s.dt).map_err(|e| s.core(e))?;
    let est = information_metric_mc(&kernel, &x0, samples, c, s.seed).map_err(|e| s.core(e))?;
    let closed = information_metric_closed(&s.system, s.dt, c).map_err(|e| s.core(e))?;
    let mut worst_z = 0.0_f64;
    for a in 0..dim {
        for b in 0..dim {
            let z = z_score(est.tensors.gamma.get(a, b), closed.gamma.get(a, b), est.standard_errors.get(a, b));
            worst_z = worst_z.max(z);
        }
    }

    let dts = s.config.sweep_dts();
    let mut gammas = Vec::new();
    for (i, &dt) in dts.iter().enumerate() {
        let kernel = TransitionKernel::new(&s.system, &drift, dt).map_err(|e| s.core(e))?;
        let est = information_metric_mc(&kernel, &x0, samples, c, s.seed.wrapping_add(1 + i as u64))
            .map_err(|e| s.core(e))?;
        gammas.push(est.tensors.gamma.get(0, 0));
    }
    let gamma_slope = loglog_slope(&dts, &gammas).unwrap_or(f64::NAN);

    let mut metrics = vec![
        Metric::at_most("gamma_z_score", worst_z, tol.z_score),
        Metric::near("gamma_dt_exponent", gamma_slope, -1.0, tol.exponent),
    ];

    let fisher = fisher_matrix(&s.start.rho).map_err(|e| s.core(e))?;
    if let DensitySpec::Gaussian { sigma, .. } = &s.config.initial.density {
        let err = (0..dim)
            .map(|a| (fisher.get(a, a) * sigma[a] * sigma[a] - 1.0).abs())
            .fold(0.0_f64, f64::max);
        metrics.push(Metric::at_most("fisher_relative_error", err, tol.fisher));
    }

    let v = s.potential.evaluate(&s.grid, &s.system).map_err(|e| s.core(e))?;
    let rho = &s.start.rho;
    let q = quantum_potential(rho, s.xi, &v, &s.system).map_err(|e| s.core(e))?;
    let width = s.grid.lengths().iter().cloned().fold(f64::INFINITY, f64::min) / 40.0;
    let bump = GridField::from_fn(&s.grid, |x| {
        let r2: f64 = x.iter().zip(&x0).map(|(x, c)| (x - c) * (x - c)).sum();
        (-r2 / (2.0 * width * width)).exp() * (1.0 + 0.3 * (x[0] - x0[0]) / width)
    })
    .map_err(|e| s.core(e))?;
    let eps = 1e-6 * rho.max() / bump.sup_norm();
    let f = |r: &GridField| functional_f(r, s.xi, &v, &s.system).map_err(|e| s.core(e));
    let plus = rho.add(&bump.scale(eps)).map_err(|e| s.core(e))?;
    let minus = rho.sub(&bump.scale(eps)).map_err(|e| s.core(e))?;
    let fd = (f(&plus)? - f(&minus)?) / (2.0 * eps);
    let analytic = crate::ops::inner(&q, &bump).map_err(|e| s.core(e))?;
    let fd_err = (fd - analytic).abs() / analytic.abs();
    metrics.push(Metric::at_most("functional_derivative_gap", fd_err, tol.functional_derivative));

    let probe = smooth_probe_density(&s.grid, s.seed).map_err(|e| s.core(e))?;
    let flat = GridField::zeros(&s.grid);
    let q_sqrt = quantum_potential(&probe, s.xi, &flat, &s.system).map_err(|e| s.core(e))?;
    let q_rho = quantum_potential_rho_form(&probe, s.xi, &flat, &s.system).map_err(|e| s.core(e))?;
    let scale = q_sqrt.sup_norm();
    let gap = q_sqrt.linf_distance(&q_rho).map_err(|e| s.core(e))?;
    let forms = if scale > 0.0 { gap / scale } else { gap };
    metrics.push(Metric::at_most("quantum_potential_forms_gap", forms, tol.quantum_potential_forms));

    let matrix = |m: &crate::infogeo::SquareMatrix| -> Vec<Vec<f64>> {
        (0..dim).map(|a| (0..dim).map(|b| m.get(a, b)).collect()).collect()
    };
    let summary = json!({
        "point": x0,
        "samples": samples,
        "c": c,
        "gamma_closed": matrix(&closed.gamma),
        "gamma_mc": matrix(&est.tensors.gamma),
        "gamma_standard_errors": matrix(&est.standard_errors),
        "gamma_sweep": dts.iter().zip(&gammas).map(|(d, g)| json!({"dt": d, "gamma_00": g})).collect::<Vec<_>>(),
        "fisher": matrix(&fisher),
    });
    let mut summary = serde_json::to_string_pretty(&summary).expect("summary serializes");
    summary.push('\n');
    Ok(Outcome {
        metrics,
        artifacts: vec![
            artifact("infogeo.json", summary),
            artifact("quantum_potential.csv", q.to_csv()),
        ],
    })
}

/// Normalized `exp(Σ a cos(2π j x_A / L_A + θ))` over the three longest
/// wavelengths of every axis, with random `a ∈ [-0.3, 0.3]` and phases.
fn smooth_probe_density(grid: &Grid, seed: u64) -> Result<GridField, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(usize, f64, f64, f64)> = (0..grid.dim())
        .flat_map(|a| (1..=3).map(move |j| (a, j as f64)))
        .map(|(a, j)| (a, j, rng.gen_range(-0.3..0.3), rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    let lengths = grid.lengths().to_vec();
    GridField::from_fn(grid, |x| {
        modes
            .iter()
            .map(|&(a, j, amp, phase)| amp * (std::f64::consts::TAU * j * x[a] / lengths[a] + phase).cos())
            .sum::<f64>()
            .exp()
    })?
    .normalized()
}

/// `sqrt(∫ρ (Φ₁ - Φ₂ - c)²)` minimized over the constant `c`.
fn weighted_phase_gap(rho: &GridField, a: &[f64], b: &[f64]) -> f64 {
    let dv = rho.grid().cell_volume();
    let w: f64 = rho.values().iter().sum::<f64>() * dv;
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = rho.values().iter().zip(&diff).map(|(r, d)| r * d).sum::<f64>() * dv / w;
    (rho.values().iter().zip(&diff).map(|(r, d)| r * (d - mean).powi(2)).sum::<f64>() * dv).sqrt()
}

fn regraduation(s: &Setup) -> Result<Outcome, HarnessError> {
    let tol = &s.config.tolerances;
    let r = regraduate(s.xi, s.eta).map_err(|_| s.requirement("dynamics.xi", "needs xi > 0"))?;
    let solver = s.solver()?;
    let psi = s.initial_psi(r.k_hat)?;
    let evolve_nl = |psi: &WaveField| solver.evolve_nonlinear(psi, s.xi, s.dt, s.steps).map_err(|e| s.core(e));

    let lin = solver.evolve_linear(&psi, s.dt, s.steps).map_err(|e| s.core(e))?;
    let non = evolve_nl(&psi)?;
    let lin_gap = lin.l2_distance(&non).map_err(|e| s.core(e))?;

    let (l0, x_min) = (s.grid.lengths()[0], -0.5 * s.grid.lengths()[0]);
    let kick: Vec<Complex64> = (0..s.grid.len())
        .map(|i| {
            let x = s.grid.point(i)[0] - x_min;
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * x / l0)
        })
        .collect();
    let wave = |values: Vec<Complex64>| WaveField::new(s.grid.clone(), values, r.k_hat, s.eta).map_err(|e| s.core(e));
    let other = wave(psi.values().iter().zip(&kick).map(|(z, e)| z * e).collect())?;
    let sum = wave(psi.values().iter().zip(other.values()).map(|(a, b)| a + b).collect())?;
    let (ea, eb, esum) = (evolve_nl(&psi)?, evolve_nl(&other)?, evolve_nl(&sum)?);
    let combined = wave(ea.values().iter().zip(eb.values()).map(|(a, b)| a + b).collect())?;
    let superposition = esum.l2_distance(&combined).map_err(|e| s.core(e))? / sum.norm().sqrt();

    let k_alt = if s.k != r.k_hat { s.k } else { 2.0 * r.k_hat };
    let run = |k: f64| -> Result<CanonicalState, HarnessError> {
        let out = evolve_nl(&s.initial_psi(k)?)?;
        Ok(decompose_psi(&out).map_err(|e| s.core(e))?.state)
    };
    let (a, b) = (run(r.k_hat)?, run(k_alt)?);
    let rho_gap = a.rho.l2_distance(&b.rho).map_err(|e| s.core(e))?;
    let phi_gap = weighted_phase_gap(&a.rho, &a.phi_values(), &b.phi_values());

    let coefficient = r.coefficient(r.k_hat);
    let mut csv = String::from("k,coefficient\n");
    for k in [0.5 * r.k_hat, r.k_hat, k_alt] {
        csv.push_str(&format!("{k:e},{:e}\n", r.coefficient(k)));
    }
    Ok(Outcome {
        metrics: vec![
            Metric::at_most("coefficient_at_k_hat", coefficient.abs(), tol.linearity),
            Metric::at_most("linear_vs_nonlinear_gap", lin_gap, tol.linearity),
            Metric::at_most("superposition_defect", superposition, tol.linearity),
            Metric::at_most("k_equivalence_density", rho_gap, tol.k_equivalence),
            Metric::at_most("k_equivalence_phase", phi_gap, tol.k_equivalence),
        ],
        artifacts: vec![
            artifact("regraduation.csv", csv),
            artifact("wave_final.csv", snapshot_csv(&lin).map_err(|e| s.core(e))?),
        ],
    })
}

fn winding(s: &Setup) -> Result<Outcome, HarnessError> {
    let tol = &s.config.tolerances;
    let PhaseSpec::PlaneWave { p } = &s.config.initial.phase else {
        return Err(s.requirement("initial.phase", "needs a plane_wave phase"));
    };
    let turns = s.k * p[0] * s.grid.lengths()[0] / (2.0 * std::f64::consts::PI * s.eta);
    let expected = turns.round();
    if (turns - expected).abs() > 1e-9 {
        return Err(s.requirement(
            "initial.phase.p[0]",
            &format!("needs k p L / (2 pi eta) to be an integer, found {turns}"),
        ));
    }
    let expected = expected as i64;
    let solver = s.solver()?;
    let mut psi = s.initial_psi(s.k)?;
    let w = phase_winding_psi(&psi, 0).map_err(|e| s.core(e))?;
    let mut error = (w.winding - expected).unsigned_abs();
    let mut distance = w.distance;
    let mut csv = format!("t,winding,decomposed_winding,distance\n0e0,{},{},{:e}\n", w.winding, w.winding, w.distance);
    for (done, n) in s.chunks() {
        psi = s.advance(&solver, &psi, n, done)?;
        let w = phase_winding_psi(&psi, 0).map_err(|e| s.core(e))?;
        let dec = decompose_psi(&psi).map_err(|e| s.core(e))?.winding[0];
        error = error.max((w.winding - expected).unsigned_abs()).max((dec - expected).unsigned_abs());
        distance = distance.max(w.distance);
        csv.push_str(&format!("{:e},{},{dec},{:e}\n", (done + n) as f64 * s.dt, w.winding, w.distance));
    }
    Ok(Outcome {
        metrics: vec![
            Metric::at_most("winding_error", error as f64, tol.winding_distance),
            Metric::at_most("winding_distance", distance, tol.winding_distance),
        ],
        artifacts: vec![artifact("winding.csv", csv)],
    })
}
