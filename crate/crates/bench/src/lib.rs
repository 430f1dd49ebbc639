//! Benchmark fixtures: deterministic random models and batches.

use quatkgc_core::{init_params, ModelParams, TrainConfig, Triple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_params(num_entities: usize, num_relations: usize, dim: usize) -> ModelParams<f32> {
    let config = TrainConfig {
        dim,
        ..TrainConfig::default()
    };
    init_params(num_entities, num_relations, &config).expect("valid fixture config")
}

pub fn fixture_batch(num_entities: usize, num_relations: usize, len: usize, seed: u64) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            Triple::new(
                rng.gen_range(0..num_entities as u32),
                rng.gen_range(0..num_relations as u32),
                rng.gen_range(0..num_entities as u32),
            )
        })
        .collect()
}
