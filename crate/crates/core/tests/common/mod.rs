#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sim_core::distance::{pairwise_l2, self_distances};
use sim_core::{DistanceMatrix, EmbeddingSet, Matrix, Modality, Registry, SimParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn embeddings(rng: &mut ChaCha8Rng, n: usize, dim: usize, modality: Modality) -> EmbeddingSet {
    let data = (0..n * dim).map(|_| rng.random_range(-5.0..5.0)).collect();
    EmbeddingSet::new(
        Registry::anonymous(n, modality),
        Matrix::new(n, dim, data).unwrap(),
    )
    .unwrap()
}

/// Random query-gallery and metric gallery-gallery distances.
pub fn instance(rng: &mut ChaCha8Rng, nq: usize, ng: usize) -> (DistanceMatrix, DistanceMatrix) {
    let dim = rng.random_range(2..8);
    let q = embeddings(rng, nq, dim, Modality::Ir);
    let g = embeddings(rng, ng, dim, Modality::Rgb);
    (pairwise_l2(&q, &g).unwrap(), self_distances(&g).unwrap())
}

pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_q: usize,
    max_g: usize,
) -> (DistanceMatrix, DistanceMatrix) {
    let nq = rng.random_range(1..=max_q);
    let ng = rng.random_range(1..=max_g);
    instance(rng, nq, ng)
}

/// Valid random parameters for a gallery of `ng`.
pub fn random_params(rng: &mut ChaCha8Rng, ng: usize) -> SimParams {
    let prune_k = rng.random_range(1..=ng);
    SimParams {
        lambda: rng.random_range(0.0..=1.0),
        big_k: rng.random_range(1..=prune_k),
        alpha: rng.random_range(0.0..=1.0),
        k_q: rng.random_range(1..=ng),
        k_g: rng.random_range(1..=ng),
        prune_k,
        expand_reciprocal: rng.random_bool(0.5),
        ..SimParams::default()
    }
}

pub fn map_values(d: &DistanceMatrix, f: impl Fn(f64) -> f64) -> DistanceMatrix {
    DistanceMatrix::new(d.rows().clone(), d.cols().clone(), d.values().map(f)).unwrap()
}
