mod common;

use std::f64::consts::PI;

use edlab::flow::{poisson_bracket, HamiltonianFunctional, MomentumFunctional, PathPerturbation};
use edlab::infogeo::gaussian_density;
use edlab::ops::inner;
use edlab::wave::ground_state;
use edlab::{CanonicalState, Error, Flow, Grid, GridField, ParticleSystem, Potential};
use proptest::prelude::*;

fn ring(n: usize) -> Grid {
    Grid::line(n, 2.0 * PI).unwrap()
}

fn free_flow(grid: &Grid, mass: f64, xi: f64) -> Flow {
    Flow::new(&ParticleSystem::single(mass, 1.0).unwrap(), xi, &Potential::Free, grid).unwrap()
}

fn bump(grid: &Grid, centre: f64, width: f64) -> GridField {
    GridField::from_fn(grid, |x| (-(x[0] - centre).powi(2) / (2.0 * width * width)).exp()).unwrap()
}

fn with_phi(state: &CanonicalState, phi: GridField) -> CanonicalState {
    CanonicalState::new(state.rho.clone(), phi, state.time).unwrap()
}

fn with_rho(state: &CanonicalState, rho: GridField) -> CanonicalState {
    CanonicalState::new(rho, state.phi.clone(), state.time).unwrap()
}

#[test]
fn gaussian_velocities() {
    let grid = Grid::line(2048, 20.0).unwrap();
    let (mass, eta, mu, sigma) = (2.0, 1.5, 0.3, 0.8);
    let system = ParticleSystem::single(mass, eta).unwrap();
    let rho = gaussian_density(&grid, &[mu], &[sigma]).unwrap();
    let state = CanonicalState::new(rho, GridField::constant(&grid, 4.0), 0.0).unwrap();
    let flow = Flow::new(&system, 0.1, &Potential::Free, &grid).unwrap();
    let vel = flow.velocities(&state).unwrap();
    assert!(vel.current_v[0].sup_norm() < 1e-12);
    for (i, x) in grid.axis_coordinates(0).iter().enumerate() {
        if (x - mu).abs() > 4.0 * sigma {
            continue;
        }
        let expected = -eta * (x - mu) / (2.0 * mass * sigma * sigma);
        assert!((vel.drift_b[0].values()[i] - expected).abs() < 1e-6, "x = {x}");
        assert!((vel.osmotic_u[0].values()[i] + expected).abs() < 1e-6, "x = {x}");
    }
}

#[test]
fn harmonic_ground_state_is_stationary() {
    let grid = Grid::line(512, 16.0).unwrap();
    let system = ParticleSystem::single(1.0, 1.0).unwrap();
    let omega = 1.0;
    let xi: f64 = 0.125;
    let hbar = (8.0 * xi).sqrt();
    let potential = Potential::harmonic(omega);
    let ground = ground_state(&system, &potential, &grid, hbar).unwrap();
    let state = CanonicalState::new(ground.rho.clone(), GridField::zeros(&grid), 0.0).unwrap();
    let flow = Flow::new(&system, xi, &potential, &grid).unwrap();

    let h = flow.hamiltonian(&state).unwrap();
    assert!((h - 0.5 * hbar * omega).abs() < 1e-4 * 0.5 * hbar * omega, "{h}");

    let hj = flow.hj_rhs(&state).unwrap();
    let peak = state.rho.max();
    for (i, r) in state.rho.values().iter().enumerate() {
        if *r > 1e-8 * peak {
            assert!((hj.values()[i] + 0.5 * hbar * omega).abs() < 1e-4, "point {i}: {}", hj.values()[i]);
        }
    }

    let dt = 1e-3;
    let next = flow.step(&state, dt).unwrap();
    assert!(next.rho.linf_distance(&state.rho).unwrap() < 1e-8);
    let shift: Vec<f64> = next.phi.values().iter().zip(state.phi.values()).map(|(a, b)| a - b).collect();
    for (i, r) in state.rho.values().iter().enumerate() {
        if *r > 1e-8 * peak {
            assert!((shift[i] + 0.5 * hbar * omega * dt).abs() < 1e-4 * dt);
        }
    }
}

#[test]
fn continuity_rhs_is_the_phi_derivative_of_h() {
    let grid = ring(128);
    let flow = free_flow(&grid, 1.3, 0.2);
    let state = common::random_smooth_state(&grid, 5);
    let fp = flow.fp_rhs(&state).unwrap();
    for centre in [-1.0, 0.5, 2.0] {
        let delta = bump(&grid, centre, 0.4);
        let exact = inner(&fp, &delta).unwrap();
        let fd = |eps: f64| {
            let up = flow.hamiltonian(&with_phi(&state, state.phi.add(&delta.scale(eps)).unwrap())).unwrap();
            let down = flow.hamiltonian(&with_phi(&state, state.phi.add(&delta.scale(-eps)).unwrap())).unwrap();
            (up - down) / (2.0 * eps)
        };
        let (coarse, fine) = (fd(1e-3), fd(5e-4));
        let richardson = (4.0 * fine - coarse) / 3.0;
        assert!((richardson - exact).abs() <= 1e-6 * exact.abs(), "{richardson} vs {exact}");
    }
}

#[test]
fn hamilton_jacobi_rhs_is_minus_the_rho_derivative_of_h() {
    let grid = ring(128);
    let system = ParticleSystem::single(0.8, 1.0).unwrap();
    let v = GridField::from_fn(&grid, |x| 0.3 * x[0].cos()).unwrap();
    let flow = Flow::with_potential_field(&system, 0.15, v).unwrap();
    let state = common::random_smooth_state(&grid, 9);
    let hj = flow.hj_rhs(&state).unwrap();
    for (a, b) in [(-1.5, 1.0), (0.2, 1.9), (-1.9, -0.4)] {
        // Zero-mean perturbation keeps the density normalized.
        let raw = bump(&grid, a, 0.35).sub(&bump(&grid, b, 0.35)).unwrap();
        let mean = edlab::ops::integrate(&raw) / grid.volume();
        let delta = raw.map(|v| v - mean);
        let exact = -inner(&hj, &delta).unwrap();
        let fd = |eps: f64| {
            let up = flow.hamiltonian(&with_rho(&state, state.rho.add(&delta.scale(eps)).unwrap())).unwrap();
            let down = flow.hamiltonian(&with_rho(&state, state.rho.add(&delta.scale(-eps)).unwrap())).unwrap();
            (up - down) / (2.0 * eps)
        };
        let (coarse, fine) = (fd(1e-4), fd(5e-5));
        let richardson = (4.0 * fine - coarse) / 3.0;
        assert!((richardson - exact).abs() <= 1e-4 * exact.abs(), "{richardson} vs {exact}");
    }
}

#[test]
fn rk4_local_error_order() {
    let grid = ring(64);
    let flow = free_flow(&grid, 1.0, 0.125);
    let state = common::random_smooth_state(&grid, 12);
    let dts = [4e-3, 2e-3, 1e-3];
    let gaps: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let full = flow.step(&state, dt).unwrap();
            let half = flow.step(&flow.step(&state, dt / 2.0).unwrap(), dt / 2.0).unwrap();
            full.rho.linf_distance(&half.rho).unwrap().max(full.phi.linf_distance(&half.phi).unwrap())
        })
        .collect();
    let order = edlab::ensemble::loglog_slope(&dts, &gaps).unwrap();
    assert!(order >= 3.8, "{gaps:?} -> {order}");
}

#[test]
fn plane_wave_momentum_and_report_layout() {
    let grid = ring(64);
    let p = 1.5;
    let state = CanonicalState::new(GridField::constant(&grid, 1.0 / (2.0 * PI)), GridField::zeros(&grid), 0.0)
        .unwrap()
        .with_tilt(vec![p])
        .unwrap();
    let flow = free_flow(&grid, 1.0, 0.0);
    let traj = flow.evolve(&state, 1e-3, 10, 5).unwrap();
    assert_eq!(traj.len(), 3);
    let report = flow.conservation_report(&traj).unwrap();
    assert!((report.rows[0].momentum[0] - p).abs() < 1e-14);
    assert!(report.max_norm_drift < 1e-14);
    let csv = report.to_csv();
    assert!(csv.starts_with("t,norm,H,P_0\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn brackets() {
    let bracket = |n: usize| {
        let grid = ring(n);
        let flow = free_flow(&grid, 1.0, 0.125);
        let state = common::random_smooth_state(&grid, 3);
        let h = HamiltonianFunctional(&flow);
        assert!(poisson_bracket(&h, &h, &state).unwrap().abs() < 1e-12);
        poisson_bracket(&MomentumFunctional { axis: 0 }, &h, &state).unwrap()
    };
    let (coarse, fine) = (bracket(256), bracket(1024));
    assert!(fine.abs() < 1e-8, "{fine}");
    let order = (coarse / fine).abs().log2() / 2.0;
    assert!(order > 3.8, "{coarse} {fine}");
}

#[test]
fn action_residual_guards() {
    let grid = ring(32);
    let flow = free_flow(&grid, 1.0, 0.125);
    let path = flow.evolve(&common::random_smooth_state(&grid, 1), 1e-3, 4, 1).unwrap();
    let zero = PathPerturbation::zeros(&path);
    assert_eq!(flow.action_residual(&path, &zero, 1e-3).unwrap(), 0.0);
    let mut at_end = zero.clone();
    at_end.phi[0] = GridField::constant(&grid, 1.0);
    assert!(matches!(flow.action_residual(&path, &at_end, 1e-3), Err(Error::PerturbationAtEndpoints)));
}

#[test]
fn blow_up_is_reported_not_hidden() {
    let grid = ring(256);
    let flow = free_flow(&grid, 1.0, 0.125);
    let state = common::random_smooth_state(&grid, 2);
    match flow.evolve(&state, 0.5, 200, 1) {
        Err(Error::Divergence { step }) => assert!(step >= 1),
        Err(Error::NegativeDensity { count }) => assert!(count > 0),
        other => panic!("unstable run was not flagged: {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn three_continuity_forms_agree(seed in any::<u64>(), mass in 0.3f64..3.0) {
        let grid = ring(128);
        let flow = free_flow(&grid, mass, 0.125);
        let state = common::random_smooth_state(&grid, seed);
        let a = flow.fp_rhs(&state).unwrap();
        let b = flow.fp_rhs_drift_diffusion(&state).unwrap();
        let c = flow.fp_rhs_continuity(&state).unwrap();
        let scale = a.sup_norm().max(1e-300);
        prop_assert!(a.linf_distance(&b).unwrap() <= 1e-10 * scale);
        prop_assert!(a.linf_distance(&c).unwrap() <= 1e-10 * scale);
    }

    #[test]
    fn drift_plus_osmotic_is_current(seed in any::<u64>()) {
        let grid = Grid::new(vec![24, 20], vec![2.0 * PI, 2.0 * PI]).unwrap();
        let system = ParticleSystem::new(vec![1.0, 2.0], 1.0, 1).unwrap();
        let flow = Flow::new(&system, 0.125, &Potential::Free, &grid).unwrap();
        let vel = flow.velocities(&common::random_smooth_state(&grid, seed)).unwrap();
        for a in 0..2 {
            let sum = vel.drift_b[a].add(&vel.osmotic_u[a]).unwrap();
            prop_assert!(sum.linf_distance(&vel.current_v[a]).unwrap() <= 1e-12 * vel.current_v[a].sup_norm().max(1.0));
        }
    }

    #[test]
    fn gauge_shifts_change_nothing(seed in any::<u64>(), c in -100.0f64..100.0) {
        let grid = ring(64);
        let flow = free_flow(&grid, 1.0, 0.125);
        let state = common::random_smooth_state(&grid, seed);
        let shifted = state.gauge_shift(c);
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1e-300);
        prop_assert!(rel(flow.hamiltonian(&state).unwrap(), flow.hamiltonian(&shifted).unwrap()) < 1e-12);
        let (va, vb) = (flow.velocities(&state).unwrap(), flow.velocities(&shifted).unwrap());
        prop_assert!(va.current_v[0].linf_distance(&vb.current_v[0]).unwrap() < 1e-10);
        let (na, nb) = (flow.step(&state, 1e-3).unwrap(), flow.step(&shifted, 1e-3).unwrap());
        prop_assert!(na.rho.linf_distance(&nb.rho).unwrap() < 1e-12);
    }

    #[test]
    fn one_step_keeps_the_norm(seed in any::<u64>(), dt in 1e-4f64..5e-3) {
        let grid = ring(64);
        let flow = free_flow(&grid, 1.0, 0.125);
        let state = common::random_smooth_state(&grid, seed);
        let next = flow.step(&state, dt).unwrap();
        prop_assert!((next.norm() - state.norm()).abs() <= 1e-10);
    }
}
