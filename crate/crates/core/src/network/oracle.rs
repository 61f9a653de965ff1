//! Straight-line reference implementations used only by tests.

use super::linalg::Matrix;
use super::params::{AttentionParams, Branch, FfnParams, LstmDirectionParams, ModelParams};
use crate::embedding::{Sentence, SentencePair};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(m: &Matrix, x: &[f64], r: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..m.cols {
        s += m.data[r * m.cols + c] * x[c];
    }
    s
}

pub fn lstm_cell(x: &[f64], h0: &[f64], c0: &[f64], p: &LstmDirectionParams) -> (Vec<f64>, Vec<f64>) {
    let hidden = h0.len();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    for k in 0..hidden {
        let pre = |g: usize| affine(&p.w[g], x, k) + affine(&p.u[g], h0, k) + p.b[g][k];
        let i = sig(pre(0));
        let f = sig(pre(1));
        let o = sig(pre(2));
        let j = pre(3).tanh();
        c[k] = f * c0[k] + i * j;
        h[k] = o * c[k].tanh();
    }
    (h, c)
}

pub fn blstm(seq: &Vec<Vec<f64>>, p: &super::params::BiLstmParams) -> Vec<Vec<f64>> {
    let hidden = p.fwd.hidden();
    let n = seq.len();
    let mut fwd = vec![vec![0.0; hidden]; n];
    let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
    for t in 0..n {
        (h, c) = lstm_cell(&seq[t], &h, &c, &p.fwd);
        fwd[t] = h.clone();
    }
    let mut bwd = vec![vec![0.0; hidden]; n];
    let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
    for t in (0..n).rev() {
        (h, c) = lstm_cell(&seq[t], &h, &c, &p.bwd);
        bwd[t] = h.clone();
    }
    (0..n).map(|t| [fwd[t].clone(), bwd[t].clone()].concat()).collect()
}

/// Pooled vector and full-length weights.
pub fn attention(h: &Matrix, mask: &[bool], p: &AttentionParams) -> (Vec<f64>, Vec<f64>) {
    let size = p.b_u.len();
    let mut scores = vec![f64::NEG_INFINITY; h.rows];
    for t in 0..h.rows {
        if !mask[t] {
            continue;
        }
        let mut u = 0.0;
        for k in 0..size {
            u += p.w_score[k] * (affine(&p.w_u, h.row(t), k) + p.b_u[k]).tanh();
        }
        scores[t] = u;
    }
    let denom: f64 = scores.iter().filter(|u| u.is_finite()).map(|u| u.exp()).sum();
    let weights: Vec<f64> = scores
        .iter()
        .map(|u| if u.is_finite() { u.exp() / denom } else { 0.0 })
        .collect();
    let mut s = vec![0.0; h.cols];
    for t in 0..h.rows {
        for c in 0..h.cols {
            s[c] += weights[t] * h.row(t)[c];
        }
    }
    (s, weights)
}

pub fn head(a: &[f64], b: &[f64], p: &FfnParams) -> f64 {
    let mut x: Vec<f64> = a.to_vec();
    x.extend_from_slice(b);
    for k in 0..a.len() {
        x.push((a[k] - b[k]).abs());
    }
    let last = p.layers.len() - 1;
    for (l, layer) in p.layers.iter().enumerate() {
        let z: Vec<f64> = (0..layer.w.rows)
            .map(|r| affine(&layer.w, &x, r) + layer.b[r])
            .collect();
        if l == last {
            return sig(z[0]);
        }
        x = z.iter().map(|v| v.tanh()).collect();
    }
    unreachable!("head has an output layer")
}

fn branch(s: &Sentence, params: &ModelParams, which: Branch) -> Vec<f64> {
    let seq: Vec<Vec<f64>> = s.real_vectors().map(<[f64]>::to_vec).collect();
    let rows = blstm(&seq, params.lstm_for(which));
    let cols = rows[0].len();
    let mut h = Matrix::zeros(rows.len(), cols);
    for (t, r) in rows.iter().enumerate() {
        h.data[t * cols..(t + 1) * cols].copy_from_slice(r);
    }
    attention(&h, &vec![true; rows.len()], params.attention_for(which)).0
}

pub fn model(pair: &SentencePair, params: &ModelParams) -> f64 {
    let a = branch(&pair.source, params, Branch::Source);
    let b = branch(&pair.suspicious, params, Branch::Suspicious);
    head(&a, &b, &params.head)
}

/// Central differences of `f` at `x`; `like` only fixes the output length.
pub fn finite_difference(like: &[f64], step: f64, f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    assert_eq!(like.len(), x.len());
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + step;
            let up = f(&probe);
            probe[k] = x[k] - step;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `max |a - n| / max(|a|, |n|, 1e-7)`.
pub fn max_relative_error(a: &[f64], n: &[f64]) -> f64 {
    a.iter()
        .zip(n)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-7))
        .fold(0.0, f64::max)
}
