mod common;

use edlab::infogeo::{
    fisher_matrix, functional_f, gaussian_density, information_metric_closed, information_metric_mc, quantum_potential,
    MetricTensors, SquareMatrix,
};
use edlab::{DriftPotential, Grid, GridField, ParticleSystem, TransitionKernel};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn closed_metric_examples() {
    let single = ParticleSystem::single(1.0, 1.0).unwrap();
    let t = information_metric_closed(&single, 0.1, 1.0).unwrap();
    assert!((t.gamma.get(0, 0) - 10.0).abs() < 1e-12);

    let pair = ParticleSystem::new(vec![1.0, 4.0], 1.0, 1).unwrap();
    let dt = 0.05;
    let t = information_metric_closed(&pair, dt, pair.eta() * dt).unwrap();
    assert_eq!(t.gamma, t.mass_tensor);
    assert_eq!(t.diffusion_tensor, SquareMatrix::diagonal(&[1.0, 0.25]));
    assert_eq!(t.mass_tensor.matmul(&t.diffusion_tensor), SquareMatrix::diagonal(&[1.0, 1.0]));

    assert!(information_metric_closed(&single, 0.0, 1.0).is_err());
    assert!(information_metric_closed(&single, 0.1, -1.0).is_err());
}

#[test]
fn tensors_serialize_with_their_dimension() {
    let pair = ParticleSystem::new(vec![2.0, 3.0], 1.0, 1).unwrap();
    let t = information_metric_closed(&pair, 0.1, 0.1).unwrap();
    let json = serde_json::to_value(&t).unwrap();
    assert_eq!(json["gamma"]["dim"], 2);
    assert_eq!(json["gamma"]["data"].as_array().unwrap().len(), 4);
    let back: MetricTensors = serde_json::from_value(json).unwrap();
    assert_eq!(back, t);
}

#[test]
fn sampled_metric_is_diagonal_and_doubles_when_the_step_halves() {
    let system = ParticleSystem::new(vec![1.0, 2.5], 1.0, 1).unwrap();
    let grid = Grid::new(vec![32, 32], vec![10.0, 10.0]).unwrap();
    let phi = DriftPotential::linear(&grid, vec![0.3, -0.4]);
    let estimate = |dt: f64, seed: u64| {
        let k = TransitionKernel::new(&system, &phi, dt).unwrap();
        information_metric_mc(&k, &[0.2, -0.1], 100_000, 1.0, seed).unwrap()
    };
    let a = estimate(0.02, 1);
    let b = estimate(0.01, 2);
    let se = &a.standard_errors;
    assert!(a.tensors.gamma.get(0, 1).abs() <= 3.0 * se.get(0, 1));
    assert!(a.tensors.gamma.get(1, 0).abs() <= 3.0 * se.get(1, 0));
    for i in 0..2 {
        let ratio = b.tensors.gamma.get(i, i) / a.tensors.gamma.get(i, i);
        let rel_se = ((a.standard_errors.get(i, i) / a.tensors.gamma.get(i, i)).powi(2)
            + (b.standard_errors.get(i, i) / b.tensors.gamma.get(i, i)).powi(2))
        .sqrt();
        assert!((ratio - 2.0).abs() <= 3.0 * ratio * rel_se, "axis {i}: {ratio}");
    }
}

#[test]
fn sampled_metric_needs_enough_samples() {
    let system = ParticleSystem::single(1.0, 1.0).unwrap();
    let grid = Grid::line(32, 10.0).unwrap();
    let k = TransitionKernel::new(&system, &DriftPotential::linear(&grid, vec![0.0]), 0.1).unwrap();
    assert!(information_metric_mc(&k, &[0.0], 100, 1.0, 0).is_err());
}

#[test]
fn fisher_examples() {
    let g = Grid::line(1024, 20.0).unwrap();
    let uniform = GridField::constant(&g, 1.0 / 20.0);
    assert_eq!(fisher_matrix(&uniform).unwrap().get(0, 0), 0.0);

    let gauss = gaussian_density(&g, &[0.0], &[0.5]).unwrap();
    let i0 = fisher_matrix(&gauss).unwrap().get(0, 0);
    assert!(rel(i0, 4.0) < 1e-6, "{i0}");

    for shift in [0.37, -1.9, 3.0 * g.spacing(0)] {
        let moved = gaussian_density(&g, &[shift], &[0.5]).unwrap();
        assert!(rel(fisher_matrix(&moved).unwrap().get(0, 0), i0) < 1e-6);
    }

    let raw = GridField::constant(&g, 1.0);
    assert!(fisher_matrix(&raw).is_err());
}

#[test]
fn fisher_scales_inversely_with_dilation_squared() {
    let g = Grid::line(2048, 24.0).unwrap();
    let mix = |s: f64| {
        GridField::from_fn(&g, |x| {
            let y = x[0] / s;
            ((-(y - 0.6).powi(2) / (2.0 * 0.5 * 0.5)).exp() + 0.5 * (-(y + 0.9).powi(2) / (2.0 * 0.7 * 0.7)).exp()) / s
        })
        .unwrap()
        .normalized()
        .unwrap()
    };
    let base = fisher_matrix(&mix(1.0)).unwrap().get(0, 0);
    for s in [0.8, 1.25, 1.6] {
        let dilated = fisher_matrix(&mix(s)).unwrap().get(0, 0);
        assert!(rel(dilated, base / (s * s)) < 1e-6, "s = {s}");
    }
}

#[test]
fn functional_examples() {
    let g = Grid::line(1024, 20.0).unwrap();
    let system = ParticleSystem::single(1.0, 1.0).unwrap();
    let gauss = gaussian_density(&g, &[0.0], &[0.5]).unwrap();
    let zero = GridField::zeros(&g);
    assert_eq!(functional_f(&gauss, 0.0, &zero, &system).unwrap(), 0.0);

    let uniform = GridField::constant(&g, 1.0 / 20.0);
    let v0 = GridField::constant(&g, 2.5);
    assert!((functional_f(&uniform, 0.3, &v0, &system).unwrap() - 2.5).abs() < 1e-12);

    let f = functional_f(&gauss, 0.125, &zero, &system).unwrap();
    assert!(rel(f, 0.5) < 1e-6, "{f}");
    assert!(functional_f(&gauss, -0.1, &zero, &system).is_err());
}

#[test]
fn quantum_potential_of_a_uniform_density_is_the_potential() {
    let g = Grid::new(vec![16, 16], vec![4.0, 4.0]).unwrap();
    let system = ParticleSystem::new(vec![1.0, 2.0], 1.0, 1).unwrap();
    let uniform = GridField::constant(&g, 1.0 / 16.0);
    let v = GridField::from_fn(&g, |x| x[0].sin() + x[1] * x[1]).unwrap();
    let q = quantum_potential(&uniform, 0.4, &v, &system).unwrap();
    assert!(q.linf_distance(&v).unwrap() < 1e-12);
    assert!(quantum_potential(&uniform, -0.4, &v, &system).is_err());
}

/// Gaussian-weighted projection that removes the `1, x, x²` content of
/// `raw`, so `g (1 + ε q)` keeps mass, mean and variance of `g`.
fn moment_free(grid: &Grid, g: &GridField, raw: &[f64]) -> Vec<f64> {
    let xs = grid.axis_coordinates(0);
    let mut gram = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for ((x, w), r) in xs.iter().zip(g.values()).zip(raw) {
        let a = Vector3::new(1.0, *x, x * x);
        gram += a * a.transpose() * *w;
        rhs += a * (w * r);
    }
    let c = gram.lu().solve(&rhs).unwrap();
    xs.iter().zip(raw).map(|(x, r)| r - c[0] - c[1] * x - c[2] * x * x).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metric_is_a_rescaled_mass_tensor(m1 in 0.1f64..10.0, m2 in 0.1f64..10.0, eta in 0.1f64..5.0, dt in 1e-4f64..1.0, c in 1e-3f64..10.0) {
        let system = ParticleSystem::new(vec![m1, m2], eta, 1).unwrap();
        let t = information_metric_closed(&system, dt, c).unwrap();
        for i in 0..2 {
            prop_assert!(rel(t.gamma.get(i, i), c / (eta * dt) * t.mass_tensor.get(i, i)) < 1e-14);
        }
        prop_assert!(t.mass_tensor.matmul(&t.diffusion_tensor).max_abs_diff(&SquareMatrix::diagonal(&[1.0, 1.0])) < 1e-15);
    }

    #[test]
    fn fisher_is_symmetric_positive_semidefinite(seed in any::<u64>()) {
        let g = Grid::new(vec![48, 40], vec![6.0, 5.0]).unwrap();
        let rho = common::random_smooth_state(&g, seed).rho;
        let i = fisher_matrix(&rho).unwrap();
        prop_assert_eq!(i.get(0, 1), i.get(1, 0));
        prop_assert!(i.get(0, 0) >= 0.0 && i.get(1, 1) >= 0.0);
        prop_assert!(i.get(0, 0) * i.get(1, 1) - i.get(0, 1) * i.get(1, 0) >= -1e-12 * i.trace().powi(2));
    }

    #[test]
    fn gaussian_has_the_lowest_fisher_energy_at_fixed_variance(seed in any::<u64>()) {
        let grid = Grid::line(1024, 16.0).unwrap();
        let sigma = 0.7;
        let gauss = gaussian_density(&grid, &[0.0], &[sigma]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<(f64, f64)> = (0..3).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let raw: Vec<f64> = grid.axis_coordinates(0).iter().map(|x| {
            coeffs.iter().enumerate().map(|(j, (c, s))| {
                let k = (j + 1) as f64 / sigma;
                c * (k * x).cos() + s * (k * x).sin()
            }).sum()
        }).collect();
        let q = moment_free(&grid, &gauss, &raw);
        let worst = q.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assume!(worst > 1e-6);
        let eps = 0.5 / worst;
        let perturbed = GridField::new(
            grid.clone(),
            gauss.values().iter().zip(&q).map(|(g, qi)| g * (1.0 + eps * qi)).collect(),
        ).unwrap().normalized().unwrap();
        let system = ParticleSystem::single(1.3, 1.0).unwrap();
        let zero = GridField::zeros(&grid);
        let f_gauss = functional_f(&gauss, 1.0, &zero, &system).unwrap();
        let f_pert = functional_f(&perturbed, 1.0, &zero, &system).unwrap();
        prop_assert!(f_pert > f_gauss, "{} vs {}", f_pert, f_gauss);
    }

    #[test]
    fn quantum_potential_is_translation_covariant(seed in any::<u64>(), shift in 0usize..64) {
        let g = Grid::line(64, 2.0 * std::f64::consts::PI).unwrap();
        let system = ParticleSystem::single(1.0, 1.0).unwrap();
        let rho = common::random_smooth_state(&g, seed).rho;
        let n = g.len();
        let rolled = GridField::new(g.clone(), (0..n).map(|i| rho.values()[(i + shift) % n]).collect()).unwrap();
        let zero = GridField::zeros(&g);
        let q = quantum_potential(&rho, 0.2, &zero, &system).unwrap();
        let q_rolled = quantum_potential(&rolled, 0.2, &zero, &system).unwrap();
        for i in 0..n {
            prop_assert!((q_rolled.values()[i] - q.values()[(i + shift) % n]).abs() < 1e-10 * q.sup_norm().max(1.0));
        }
    }
}
