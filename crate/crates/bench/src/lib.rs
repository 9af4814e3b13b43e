//! Fixtures shared by the criterion benches in `benches/`.

use load_core::choice::{ChoiceObservation, ItemCatalog};
use load_core::experiment::simulate_logged_data;
use load_core::sim::{Environment, EnvironmentSpec, Scenario};
use load_core::OptimizationInstance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random static assortment instance with `n` items and capacity `k`.
pub fn assortment_instance(n: usize, k: usize, seed: u64) -> OptimizationInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let r = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    OptimizationInstance::new(u, r, k).expect("valid instance")
}

/// Rank-3 environment with the default singular scale.
pub fn environment(d1: usize, d2: usize, n_items: usize, capacity: usize, seed: u64) -> Environment {
    EnvironmentSpec::Synthetic {
        d1,
        d2,
        n_items,
        capacity,
        rank: 3.min(d1).min(d2),
        singular_scale: 10.0,
        scenario: Scenario::LowRank,
    }
    .build(seed)
    .expect("valid environment")
}

/// `n` uniformly explored interactions from [`environment`].
pub fn logged_data(env: &Environment, n: usize, seed: u64) -> (ItemCatalog, Vec<ChoiceObservation>) {
    let records = simulate_logged_data(env, n, seed).expect("simulation");
    (env.catalog().clone(), records)
}
