//! Input builders shared by the benchmarks.

use pd_core::embedding::{PairDataset, Sentence, SentencePair};
use pd_core::network::{ModelParams, ModelShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random fully-populated sentence pairs with alternating labels.
pub fn random_pairs(n: usize, dim: usize, len: usize, seed: u64) -> PairDataset {
    let mut r = rng(seed);
    let sentence = |r: &mut ChaCha8Rng| {
        let v: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        Sentence::from_vectors(&v, dim, len)
    };
    let pairs = (0..n)
        .map(|i| SentencePair {
            id: i.to_string(),
            label: (i % 2) as u8,
            source: sentence(&mut r),
            suspicious: sentence(&mut r),
        })
        .collect();
    PairDataset::new(pairs, dim, len).expect("consistent shapes")
}

pub fn random_model(shape: &ModelShape, seed: u64) -> ModelParams {
    ModelParams::random(shape, &mut rng(seed))
}

/// `n` points in `dim` dimensions around three well-separated centres.
pub fn blobs(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let c = (i % 3) as f64 * 10.0;
            (0..dim).map(|_| c + r.random_range(-1.0..1.0)).collect()
        })
        .collect()
}
