//! Instance generators shared by the integration tests.
#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use semcache::workload::{self, WorkloadSpec};
use semcache::{Cache, DistanceMetric, QuerySpace};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Positive weights normalized to sum to one.
pub fn random_probs<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn random_costs<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(0.01..=1.0)).collect()
}

pub fn random_embeddings<R: Rng>(rng: &mut R, m: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// Unstructured instance: Gaussian embeddings, random `p` and `c`.
pub fn random_space<R: Rng>(rng: &mut R, m: usize, metric: DistanceMetric) -> QuerySpace {
    let emb = random_embeddings(rng, m, 4);
    let p = random_probs(rng, m);
    let c = random_costs(rng, m);
    QuerySpace::new(emb, p, c, metric).expect("valid random instance")
}

/// Instance from the clustered workload generator.
pub fn clustered_space(m: usize, seed: u64) -> QuerySpace {
    workload::generate(&WorkloadSpec {
        m,
        seed,
        ..WorkloadSpec::default()
    })
    .expect("valid generator spec")
}

/// Threshold instance whose epsilon sits between the raw distance quantiles,
/// so every instance mixes covered and uncovered pairs.
pub fn random_threshold_space<R: Rng>(rng: &mut R, m: usize) -> QuerySpace {
    let emb = random_embeddings(rng, m, 3);
    let epsilon = rng.random_range(0.5..3.0);
    let p = random_probs(rng, m);
    let c = random_costs(rng, m);
    QuerySpace::new(emb, p, c, DistanceMetric::Threshold { epsilon })
        .expect("valid threshold instance")
}

pub fn random_subset<R: Rng>(rng: &mut R, m: usize) -> Vec<usize> {
    let size = rng.random_range(0..=m);
    let mut s = sample(rng, m, size).into_vec();
    s.sort_unstable();
    s
}

pub fn cache(indices: &[usize], m: usize) -> Cache {
    Cache::from_indices(indices.iter().copied(), m).expect("valid cache")
}
