#![allow(dead_code)]

use edlab::flow::CanonicalState;
use edlab::{Grid, GridField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Random trigonometric polynomial with `modes` harmonics per axis and
/// coefficients uniform in `[-amplitude, amplitude]`.
pub fn random_periodic(grid: &Grid, modes: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> GridField {
    let d = grid.dim();
    let coeffs: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|_| {
            (0..modes)
                .map(|_| (rng.gen_range(-amplitude..amplitude), rng.gen_range(-amplitude..amplitude)))
                .collect()
        })
        .collect();
    GridField::from_fn(grid, |x| {
        let mut v = 0.0;
        for a in 0..d {
            let l = grid.lengths()[a];
            for (j, (c, s)) in coeffs[a].iter().enumerate() {
                let k = 2.0 * PI * (j + 1) as f64 / l;
                v += c * (k * x[a]).cos() + s * (k * x[a]).sin();
            }
        }
        v
    })
    .unwrap()
}

/// Smooth, strictly positive, normalized density and smooth phase.
pub fn random_smooth_state(grid: &Grid, seed: u64) -> CanonicalState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_rho = random_periodic(grid, 3, 0.3, &mut rng);
    let phi = random_periodic(grid, 3, 0.5, &mut rng);
    let rho = log_rho.map(f64::exp).normalized().unwrap();
    CanonicalState::new(rho, phi, 0.0).unwrap()
}

/// `sqrt(∫ρ (Φ₁ - Φ₂ - c)²)` with the constant `c` chosen to minimize it.
pub fn weighted_phase_gap(rho: &GridField, a: &[f64], b: &[f64]) -> f64 {
    let dv = rho.grid().cell_volume();
    let w: f64 = rho.values().iter().sum::<f64>() * dv;
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = rho.values().iter().zip(&diff).map(|(r, d)| r * d).sum::<f64>() * dv / w;
    (rho.values().iter().zip(&diff).map(|(r, d)| r * (d - mean).powi(2)).sum::<f64>() * dv).sqrt()
}
