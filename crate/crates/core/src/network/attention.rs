//! Masked attention pooling over BLSTM states.
//!
//! `u_t = w_score · tanh(W_u h_t + b_u)`, `α = softmax(u)` over the unmasked
//! positions, `s = Σ α_t h_t`.

use super::linalg::{axpy, dot, Matrix};
use super::params::AttentionParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCache {
    pub positions: Vec<usize>,
    /// `tanh(W_u h_t + b_u)` per visited position.
    pub activations: Vec<Vec<f64>>,
    /// Weights over all positions (zero where masked).
    pub weights: Vec<f64>,
}

/// Returns the pooled vector (length `2H`) and the cache, whose `weights`
/// are the attention distribution.
pub fn attention_pool(hiddens: &Matrix, mask: &[bool], p: &AttentionParams) -> Result<(Vec<f64>, AttentionCache)> {
    if mask.len() != hiddens.rows || p.w_u.cols != hiddens.cols {
        return Err(Error::Usage(format!(
            "attention over {}x{} states with {} mask entries and {} inputs",
            hiddens.rows,
            hiddens.cols,
            mask.len(),
            p.w_u.cols
        )));
    }
    let positions: Vec<usize> = (0..mask.len()).filter(|&t| mask[t]).collect();
    if positions.is_empty() {
        return Err(Error::Numeric("attention over a fully masked sequence".into()));
    }
    let mut activations = Vec::with_capacity(positions.len());
    let mut scores = Vec::with_capacity(positions.len());
    for &t in &positions {
        let mut z = p.b_u.clone();
        p.w_u.mul_vec_add(hiddens.row(t), &mut z);
        z.iter_mut().for_each(|v| *v = v.tanh());
        scores.push(dot(&p.w_score, &z));
        activations.push(z);
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|u| (u - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut weights = vec![0.0; mask.len()];
    let mut pooled = vec![0.0; hiddens.cols];
    for (k, &t) in positions.iter().enumerate() {
        weights[t] = exps[k] / total;
        axpy(weights[t], hiddens.row(t), &mut pooled);
    }
    Ok((
        pooled,
        AttentionCache {
            positions,
            activations,
            weights,
        },
    ))
}

/// Given `d_pooled`, accumulates parameter gradients into `grads` and the
/// state gradients into `d_hiddens`.
pub fn attention_backward(
    hiddens: &Matrix,
    p: &AttentionParams,
    cache: &AttentionCache,
    d_pooled: &[f64],
    grads: &mut AttentionParams,
    d_hiddens: &mut Matrix,
) {
    let d_weights: Vec<f64> = cache.positions.iter().map(|&t| dot(d_pooled, hiddens.row(t))).collect();
    let mean: f64 = cache
        .positions
        .iter()
        .zip(&d_weights)
        .map(|(&t, dw)| cache.weights[t] * dw)
        .sum();
    let cols = d_hiddens.cols;
    for (k, &t) in cache.positions.iter().enumerate() {
        let alpha = cache.weights[t];
        let du = alpha * (d_weights[k] - mean);
        let a = &cache.activations[k];
        let dz: Vec<f64> = a
            .iter()
            .zip(&p.w_score)
            .map(|(ak, wk)| du * wk * (1.0 - ak * ak))
            .collect();
        axpy(du, a, &mut grads.w_score);
        grads.w_u.add_outer(&dz, hiddens.row(t));
        axpy(1.0, &dz, &mut grads.b_u);
        let row = &mut d_hiddens.data[t * cols..(t + 1) * cols];
        axpy(alpha, d_pooled, row);
        p.w_u.mul_t_vec_add(&dz, row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_attention(rng: &mut ChaCha8Rng, input: usize, size: usize) -> AttentionParams {
        let mut p = AttentionParams::zeros(input, size);
        p.w_u.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        p.b_u.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        p.w_score.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        p
    }

    fn random_states(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        m.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        m
    }

    #[test]
    fn equal_scores_are_uniform() {
        // zero score projection makes every u_t equal
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = random_attention(&mut rng, 4, 3);
        p.w_score = vec![0.0; 3];
        let h = random_states(&mut rng, 5, 4);
        let mask = [true, true, false, true, false];
        let (_, cache) = attention_pool(&h, &mask, &p).unwrap();
        for (t, w) in cache.weights.iter().enumerate() {
            let expected = if mask[t] { 1.0 / 3.0 } else { 0.0 };
            assert!((w - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn single_position_returns_its_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_attention(&mut rng, 4, 2);
        let h = random_states(&mut rng, 3, 4);
        let (s, cache) = attention_pool(&h, &[false, true, false], &p).unwrap();
        assert_eq!(s, h.row(1));
        assert_eq!(cache.weights, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn fully_masked_is_a_domain_error() {
        let p = AttentionParams::zeros(2, 2);
        let h = Matrix::zeros(2, 2);
        assert!(matches!(
            attention_pool(&h, &[false, false], &p),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn matches_direct_evaluation() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_attention(&mut rng, 6, 3);
            let h = random_states(&mut rng, 5, 6);
            let mask: Vec<bool> = (0..5).map(|t| t == 0 || rng.random_bool(0.6)).collect();
            let (s, cache) = attention_pool(&h, &mask, &p).unwrap();
            let sum: f64 = cache.weights.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            assert!(cache.weights.iter().all(|w| *w >= 0.0));
            let (os, ow) = oracle::attention(&h, &mask, &p);
            for (a, b) in s.iter().zip(&os) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in cache.weights.iter().zip(&ow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
