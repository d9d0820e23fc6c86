//! Deterministic inputs shared by the benchmarks.

use leadlag_core::{EigenCurve, LoadingMatrix, LoadingVector, ModelSpec, ReturnPanel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One-factor loadings with `rho_i^2` uniform in `[0.05, 0.6]`.
pub fn loading_vector(n: usize, seed: u64) -> LoadingVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = (0..n)
        .map(|_| rng.random_range(0.05f64..0.6).sqrt())
        .collect();
    LoadingVector::new(rho, 1).expect("valid loadings")
}

/// Loadings for `f` factors with every row norm squared below 0.9.
pub fn loading_matrix(n: usize, f: usize, seed: u64) -> LoadingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rho = DMatrix::from_fn(n, f, |_, _| rng.random_range(-1.0..1.0));
    for mut row in rho.row_iter_mut() {
        let target = rng.random_range(0.1f64..0.9).sqrt();
        let norm = row.norm();
        row *= target / norm;
    }
    LoadingMatrix::new(rho, 1).expect("valid loadings")
}

pub fn spec(n: usize, f: usize, alpha: f64, seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = DMatrix::from_fn(n, f, |_, _| rng.random_range(-0.5..0.5));
    ModelSpec {
        n_assets: n,
        n_factors: f,
        alpha,
        sigma: vec![1.0; n],
        factor_sigma: vec![1.0; f],
        beta,
        seed,
    }
}

pub fn panel(n: usize, f: usize, steps: usize, seed: u64) -> ReturnPanel {
    let spec = spec(n, f, 0.2, seed);
    leadlag_core::simulate_panel(&spec, steps, 32).expect("simulation succeeds")
}

/// A noisy curve around the practical law.
pub fn noisy_curve(n: usize, gamma: f64, alpha: f64, seed: u64) -> EigenCurve {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taus: Vec<u64> = (0..8).map(|k| 1 << k).collect();
    let exact = leadlag_core::practical_eigencurve(n, gamma, alpha, &taus).expect("valid law");
    let values = exact
        .values
        .iter()
        .map(|v| v * (1.0 + rng.random_range(-0.02..0.02)))
        .collect();
    EigenCurve::new(taus, values, 1).expect("positive values")
}
