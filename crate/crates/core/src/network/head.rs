//! Feed-forward similarity head over `[s_sou, s_sus, |s_sou - s_sus|]`.

use super::linalg::sigmoid;
use super::params::{DenseLayer, FfnParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HeadCache {
    /// Input of every layer; `inputs[0]` is the concatenated feature vector.
    pub inputs: Vec<Vec<f64>>,
    /// Output probability.
    pub p: f64,
}

/// Builds the `6H` feature vector.
pub fn head_features(s_sou: &[f64], s_sus: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(3 * s_sou.len());
    x.extend_from_slice(s_sou);
    x.extend_from_slice(s_sus);
    x.extend(s_sou.iter().zip(s_sus).map(|(a, b)| (a - b).abs()));
    x
}

/// Probability that the pair is plagiarized.
pub fn predictor_forward(s_sou: &[f64], s_sus: &[f64], head: &FfnParams) -> Result<(f64, HeadCache)> {
    let x = head_features(s_sou, s_sus);
    let expected = head.layers.first().map(|l| l.w.cols).unwrap_or(0);
    if s_sou.len() != s_sus.len() || x.len() != expected {
        return Err(Error::Usage(format!(
            "head expects {expected} features, got sentence vectors of {} and {}",
            s_sou.len(),
            s_sus.len()
        )));
    }
    let mut inputs = vec![x];
    let last = head.layers.len() - 1;
    let mut p = 0.0;
    for (l, DenseLayer { w, b }) in head.layers.iter().enumerate() {
        let mut z = b.clone();
        w.mul_vec_add(inputs.last().expect("non-empty"), &mut z);
        if l == last {
            p = sigmoid(z[0]);
        } else {
            inputs.push(z.into_iter().map(f64::tanh).collect());
        }
    }
    if !p.is_finite() {
        return Err(Error::Numeric("non-finite head output".into()));
    }
    Ok((p, HeadCache { inputs, p }))
}

/// Back-propagates `d_p = dL/dp`, accumulating into `grads`; returns the
/// gradients with respect to `s_sou` and `s_sus`.
pub fn predictor_backward(
    s_sou: &[f64],
    s_sus: &[f64],
    head: &FfnParams,
    cache: &HeadCache,
    d_p: f64,
    grads: &mut FfnParams,
) -> (Vec<f64>, Vec<f64>) {
    let mut delta = vec![d_p * cache.p * (1.0 - cache.p)];
    for l in (0..head.layers.len()).rev() {
        let input = &cache.inputs[l];
        grads.layers[l].w.add_outer(&delta, input);
        for (b, d) in grads.layers[l].b.iter_mut().zip(&delta) {
            *b += d;
        }
        let mut d_input = vec![0.0; input.len()];
        head.layers[l].w.mul_t_vec_add(&delta, &mut d_input);
        if l > 0 {
            // input of layer l is tanh output of layer l-1
            delta = d_input.iter().zip(input).map(|(d, a)| d * (1.0 - a * a)).collect();
        } else {
            delta = d_input;
        }
    }
    let n = s_sou.len();
    let mut d_sou = delta[..n].to_vec();
    let mut d_sus = delta[n..2 * n].to_vec();
    for k in 0..n {
        let diff = s_sou[k] - s_sus[k];
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        d_sou[k] += sign * delta[2 * n + k];
        d_sus[k] -= sign * delta[2 * n + k];
    }
    (d_sou, d_sus)
}

impl FfnParams {
    pub fn input_width(&self) -> usize {
        self.layers.first().map(|l| l.w.cols).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::oracle;
    use crate::network::params::{ModelParams, ModelShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_inputs_zero_the_difference_segment() {
        let s = [0.3, -0.7, 1.1];
        let x = head_features(&s, &s);
        assert_eq!(&x[6..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_head_gives_half() {
        let shape = ModelShape::new(2, 2, 2);
        let head = ModelParams::zeros(&shape).head;
        let (p, _) = predictor_forward(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4], &head).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn matches_layer_by_layer_oracle() {
        let mut shape = ModelShape::new(2, 3, 2);
        shape.head_hidden = vec![5, 4];
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let head = ModelParams::random(&shape, &mut rng).head;
            let a: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (p, _) = predictor_forward(&a, &b, &head).unwrap();
            assert!((p - oracle::head(&a, &b, &head)).abs() < 1e-14);
            assert!(p > 0.0 && p < 1.0);
        }
    }
}
