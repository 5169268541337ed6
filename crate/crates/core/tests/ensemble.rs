use std::f64::consts::PI;

use edlab::ensemble::{cell_average, empirical_moments, empirical_moments_about_drift, trajectory_header};
use edlab::wave::ground_state;
use edlab::{CanonicalState, DriftPotential, Grid, GridField, ParticleSystem, Potential, TransitionKernel, WalkerEnsemble};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn within(value: f64, target: f64, se: f64, k: f64) -> bool {
    (value - target).abs() <= k * se
}

#[test]
fn unbiased_noise_and_fluctuation_variance() {
    let system = ParticleSystem::single(2.0, 1.0).unwrap();
    let grid = Grid::line(128, 16.0).unwrap();
    let kernel = TransitionKernel::new(&system, &DriftPotential::linear(&grid, vec![0.0]), 0.1).unwrap();
    let start = WalkerEnsemble::at_point(&system, &grid, &[0.0], 100_000, 11).unwrap();
    let next = start.sample_step(&kernel).unwrap();
    let m = empirical_moments(&start, &next).unwrap();
    assert!(within(m.empirical_mean[0], 0.0, m.standard_errors[0], 3.0), "{m:?}");
    assert!(within(m.empirical_cov[0], 0.05, m.cov_standard_errors[0], 3.0), "{m:?}");
}

#[test]
fn linear_drift_potential_moments() {
    let (eta, mass, p, dt) = (0.7, 1.5, 2.0, 0.01);
    let system = ParticleSystem::single(mass, eta).unwrap();
    let grid = Grid::line(64, 12.0).unwrap();
    let kernel = TransitionKernel::new(&system, &DriftPotential::linear(&grid, vec![p]), dt).unwrap();
    let start = WalkerEnsemble::at_point(&system, &grid, &[1.0], 100_000, 5).unwrap();
    let next = start.sample_step(&kernel).unwrap();
    let m = empirical_moments_about_drift(&start, &next, &kernel).unwrap();
    assert!(within(m.empirical_mean[0] / dt, eta * p / mass, m.standard_errors[0] / dt, 3.0), "{m:?}");
    assert!(within(m.empirical_cov[0] / dt, eta / mass, m.cov_standard_errors[0] / dt, 3.0), "{m:?}");
}

#[test]
fn doubling_the_mass_halves_the_spread() {
    let grid = Grid::line(64, 12.0).unwrap();
    let var = |mass: f64| {
        let system = ParticleSystem::single(mass, 1.0).unwrap();
        let kernel = TransitionKernel::new(&system, &DriftPotential::linear(&grid, vec![0.0]), 0.05).unwrap();
        let start = WalkerEnsemble::at_point(&system, &grid, &[0.0], 100_000, 21).unwrap();
        let m = empirical_moments(&start, &start.sample_step(&kernel).unwrap()).unwrap();
        (m.empirical_cov[0], m.cov_standard_errors[0])
    };
    let (v1, s1) = var(1.0);
    let (v2, s2) = var(2.0);
    let ratio = v2 / v1;
    let se = ratio * ((s1 / v1).powi(2) + (s2 / v2).powi(2)).sqrt();
    assert!(within(ratio, 0.5, se, 3.0), "{ratio} +- {se}");
}

#[test]
fn ensembles_are_reproducible_across_thread_counts() {
    let system = ParticleSystem::new(vec![1.0, 3.0], 1.0, 1).unwrap();
    let grid = Grid::new(vec![32, 32], vec![8.0, 8.0]).unwrap();
    let kernel = TransitionKernel::new(&system, &DriftPotential::linear(&grid, vec![0.5, -1.0]), 0.02).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut e = WalkerEnsemble::sample_gaussian(&system, &grid, &[0.0, 0.0], &[1.0, 0.5], 5_000, 99).unwrap();
            for _ in 0..5 {
                e = e.sample_step(&kernel).unwrap();
            }
            e
        })
    };
    let one = run(1);
    assert_eq!(one.positions(), run(4).positions());
    assert_eq!(one.positions(), run(1).positions());
    let other_seed = WalkerEnsemble::sample_gaussian(&system, &grid, &[0.0, 0.0], &[1.0, 0.5], 5_000, 100).unwrap();
    assert_ne!(other_seed.positions(), WalkerEnsemble::sample_gaussian(&system, &grid, &[0.0, 0.0], &[1.0, 0.5], 5_000, 99).unwrap().positions());
}

#[test]
fn uniform_walkers_give_a_flat_histogram() {
    let system = ParticleSystem::single(1.0, 1.0).unwrap();
    let grid = Grid::line(32, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = 200_000;
    let positions: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let e = WalkerEnsemble::from_positions(&system, &grid, positions, 0).unwrap();
    let rho = e.estimate_density(&grid).unwrap().rho;
    let p = 1.0 / 32.0;
    let se = (p * (1.0 - p) / m as f64).sqrt() / grid.spacing(0);
    for v in rho.values() {
        assert!(within(*v, 0.25, se, 4.0), "{v}");
    }
}

#[test]
fn million_gaussian_walkers_match_the_density() {
    let system = ParticleSystem::single(1.0, 1.0).unwrap();
    let l = 12.0;
    let sigma = 0.8;
    let coarse = Grid::line(128, l).unwrap();
    let fine = Grid::line(128 * 16, l).unwrap();
    let exact = GridField::from_fn(&fine, |x| (-x[0] * x[0] / (2.0 * sigma * sigma)).exp())
        .unwrap()
        .normalized()
        .unwrap();
    let reference = cell_average(&exact, &coarse).unwrap();
    let e = WalkerEnsemble::sample_gaussian(&system, &coarse, &[0.0], &[sigma], 1_000_000, 8).unwrap();
    let rho = e.estimate_density(&coarse).unwrap().rho;
    let l1 = rho.l1_distance(&reference).unwrap();
    assert!(l1 <= 0.01, "{l1}");
}

#[test]
fn coupled_walkers_keep_the_ground_state() {
    let system = ParticleSystem::single(1.0, 1.0).unwrap();
    let l = 10.0;
    let grid = Grid::line(256, l).unwrap();
    let ground = ground_state(&system, &Potential::harmonic(1.0), &grid, 1.0).unwrap();
    let state = CanonicalState::new(ground.rho.clone(), GridField::zeros(&grid), 0.0).unwrap();
    let m = 40_000;
    let mut e = WalkerEnsemble::sample_density(&system, &ground.rho, m, 17).unwrap();
    let dt = 1e-3;
    for _ in 0..1000 {
        e = e.evolve_coupled(&state, dt).unwrap();
    }
    let bins = Grid::line(32, l).unwrap();
    let hist = e.estimate_density(&bins).unwrap().rho;
    let reference = cell_average(&ground.rho, &bins).unwrap();
    let l1 = hist.l1_distance(&reference).unwrap();
    assert!(l1 <= 5.0 / (m as f64).sqrt(), "{l1}");
}

/// Walker paths with vanishing noise against a fine-step RK4 integration of
/// `dx/dt = Φ'(x)/m`.
#[test]
fn zero_noise_walkers_follow_the_current_velocity() {
    let l = 2.0 * PI;
    let grid = Grid::line(2048, l).unwrap();
    let mass = 1.5;
    let amp = 0.4;
    let system = ParticleSystem::single(mass, 1e-12).unwrap();
    let rho = GridField::constant(&grid, 1.0 / l);
    let phi = GridField::from_fn(&grid, |x| amp * x[0].sin()).unwrap();
    let state = CanonicalState::new(rho, phi, 0.0).unwrap();
    let velocity = |x: f64| amp * x.cos() / mass;
    let starts = [-2.5, -1.0, 0.3, 1.7, 2.9];
    let horizon = 1.0;

    let reference: Vec<f64> = starts
        .iter()
        .map(|&x0| {
            let h = 1e-4;
            let mut x = x0;
            for _ in 0..(horizon / h) as usize {
                let k1 = velocity(x);
                let k2 = velocity(x + 0.5 * h * k1);
                let k3 = velocity(x + 0.5 * h * k2);
                let k4 = velocity(x + h * k3);
                x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            x
        })
        .collect();

    let error = |dt: f64| {
        let mut e = WalkerEnsemble::from_positions(&system, &grid, starts.to_vec(), 4).unwrap();
        for _ in 0..(horizon / dt).round() as usize {
            e = e.evolve_coupled(&state, dt).unwrap();
        }
        e.positions()
            .iter()
            .zip(&reference)
            .map(|(x, r)| grid.min_image(0, x - r).abs())
            .fold(0.0, f64::max)
    };
    let coarse = error(0.02);
    let fine = error(0.01);
    assert!(coarse <= 0.02, "{coarse}");
    let order = (coarse / fine).log2();
    assert!((0.8..1.2).contains(&order), "{coarse} {fine} {order}");
}

#[test]
fn trajectory_dump_layout() {
    assert_eq!(trajectory_header(2), "step,walker_id,x0,x1");
    let system = ParticleSystem::single(1.0, 1.0).unwrap();
    let grid = Grid::line(16, 4.0).unwrap();
    let e = WalkerEnsemble::from_positions(&system, &grid, vec![0.5, -1.0], 0).unwrap();
    let rows = e.trajectory_rows();
    let first: Vec<&str> = rows.lines().next().unwrap().split(',').collect();
    assert_eq!(first.len(), 3);
    assert_eq!((first[0], first[1]), ("0", "0"));
    assert_eq!(first[2].parse::<f64>().unwrap(), 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn walkers_stay_in_the_box(seed in any::<u64>(), tilt in -50.0f64..50.0, dt in 1e-3f64..0.2) {
        let system = ParticleSystem::single(1.0, 1.0).unwrap();
        let grid = Grid::line(32, 3.0).unwrap();
        let kernel = TransitionKernel::new(&system, &DriftPotential::linear(&grid, vec![tilt]), dt).unwrap();
        let mut e = WalkerEnsemble::sample_gaussian(&system, &grid, &[0.0], &[2.0], 500, seed).unwrap();
        for _ in 0..3 {
            e = e.sample_step(&kernel).unwrap();
        }
        prop_assert!(e.positions().iter().all(|x| (-1.5..1.5).contains(x)));
    }

    #[test]
    fn same_seed_same_walkers(seed in any::<u64>()) {
        let system = ParticleSystem::single(1.0, 1.0).unwrap();
        let grid = Grid::line(32, 6.0).unwrap();
        let kernel = TransitionKernel::new(&system, &DriftPotential::linear(&grid, vec![1.0]), 0.01).unwrap();
        let a = WalkerEnsemble::at_point(&system, &grid, &[0.0], 200, seed).unwrap().sample_step(&kernel).unwrap();
        let b = WalkerEnsemble::at_point(&system, &grid, &[0.0], 200, seed).unwrap().sample_step(&kernel).unwrap();
        prop_assert_eq!(a.positions(), b.positions());
    }

    #[test]
    fn histograms_are_normalized(seed in any::<u64>(), bins in 4usize..64) {
        let system = ParticleSystem::single(1.0, 1.0).unwrap();
        let grid = Grid::line(bins, 5.0).unwrap();
        let e = WalkerEnsemble::sample_gaussian(&system, &grid, &[0.3], &[0.9], 1_000, seed).unwrap();
        let rho = e.estimate_density(&grid).unwrap().rho;
        prop_assert!((edlab::ops::integrate(&rho) - 1.0).abs() < 1e-12);
    }
}
