//! Fixtures shared by the benchmarks.

use rand::Rng;
use sil_core::rng::seeded;
use sil_core::CostMatrix;

/// `n x m` cost matrix with entries uniform in [0, 2).
pub fn random_costs(n: usize, m: usize, seed: u64) -> CostMatrix {
    let mut rng = seeded(seed);
    CostMatrix::from_fn(n, m, |_, _| rng.random_range(0.0..2.0)).expect("valid shape")
}

pub fn random_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}
