//! LSTM cell and bidirectional pass with reverse-mode gradients.

use super::linalg::{sigmoid, Matrix};
use super::params::{BiLstmParams, LstmDirectionParams, GATE_F, GATE_I, GATE_J, GATE_O};
use crate::embedding::Sentence;
use crate::error::{Error, Result};

/// Activations of one step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    /// Candidate `tanh(W_j x + U_j h_prev + b_j)`.
    pub j: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM step:
///
/// ```text
/// i = σ(W_i x + U_i h + b_i)   f = σ(W_f x + U_f h + b_f)   o = σ(W_o x + U_o h + b_o)
/// c' = f ⊙ c + i ⊙ tanh(W_j x + U_j h + b_j)                h' = o ⊙ tanh(c')
/// ```
pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmDirectionParams,
) -> Result<(Vec<f64>, Vec<f64>, CellCache)> {
    let hidden = p.hidden();
    if x.len() != p.dim() || h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(Error::Usage(format!(
            "cell expects x of {} and state of {hidden}, got {}, {}, {}",
            p.dim(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    if x.iter().chain(h_prev).chain(c_prev).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite LSTM input".into()));
    }
    let cache = cell_step(x, h_prev, c_prev, p);
    Ok((h_of(&cache), cache.c.clone(), cache))
}

fn h_of(cache: &CellCache) -> Vec<f64> {
    cache.o.iter().zip(&cache.tanh_c).map(|(o, t)| o * t).collect()
}

fn preactivation(g: usize, x: &[f64], h_prev: &[f64], p: &LstmDirectionParams) -> Vec<f64> {
    let mut z = p.b[g].clone();
    p.w[g].mul_vec_add(x, &mut z);
    p.u[g].mul_vec_add(h_prev, &mut z);
    z
}

fn cell_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmDirectionParams) -> CellCache {
    let i: Vec<f64> = preactivation(GATE_I, x, h_prev, p).into_iter().map(sigmoid).collect();
    let f: Vec<f64> = preactivation(GATE_F, x, h_prev, p).into_iter().map(sigmoid).collect();
    let o: Vec<f64> = preactivation(GATE_O, x, h_prev, p).into_iter().map(sigmoid).collect();
    let j: Vec<f64> = preactivation(GATE_J, x, h_prev, p).into_iter().map(f64::tanh).collect();
    let c: Vec<f64> = (0..c_prev.len()).map(|k| f[k] * c_prev[k] + i[k] * j[k]).collect();
    let tanh_c = c.iter().map(|v| v.tanh()).collect();
    CellCache {
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        o,
        j,
        c,
        tanh_c,
    }
}

/// Back-propagates one step. `dh` and `dc` are the gradients reaching h_t and
/// c_t; gradients of the weights are accumulated into `grads`, and the
/// gradients with respect to (h_prev, c_prev) are returned.
pub fn lstm_cell_backward(
    x: &[f64],
    cache: &CellCache,
    dh: &[f64],
    dc: &[f64],
    p: &LstmDirectionParams,
    grads: &mut LstmDirectionParams,
) -> (Vec<f64>, Vec<f64>) {
    let hidden = dh.len();
    let mut dz: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hidden]);
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let (i, f, o, j) = (cache.i[k], cache.f[k], cache.o[k], cache.j[k]);
        let tc = cache.tanh_c[k];
        let dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc);
        dz[GATE_O][k] = dh[k] * tc * o * (1.0 - o);
        dz[GATE_I][k] = dc_total * j * i * (1.0 - i);
        dz[GATE_J][k] = dc_total * i * (1.0 - j * j);
        dz[GATE_F][k] = dc_total * cache.c_prev[k] * f * (1.0 - f);
        dc_prev[k] = dc_total * f;
    }
    let mut dh_prev = vec![0.0; hidden];
    for g in 0..4 {
        grads.w[g].add_outer(&dz[g], x);
        grads.u[g].add_outer(&dz[g], &cache.h_prev);
        for (b, d) in grads.b[g].iter_mut().zip(&dz[g]) {
            *b += d;
        }
        p.u[g].mul_t_vec_add(&dz[g], &mut dh_prev);
    }
    (dh_prev, dc_prev)
}

/// Per-direction trace of a bidirectional pass: the positions visited, in
/// processing order, and the cache of each step.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionCache {
    pub positions: Vec<usize>,
    pub steps: Vec<CellCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlstmCache {
    pub fwd: DirectionCache,
    pub bwd: DirectionCache,
}

/// Output of a bidirectional pass: `len x 2H`, row t = [h_fwd(t), h_bwd(t)],
/// zero rows at masked positions.
#[derive(Debug, Clone, PartialEq)]
pub struct BlstmOutput {
    pub hidden: Matrix,
    pub cache: BlstmCache,
}

fn run_direction(
    sentence: &Sentence,
    positions: Vec<usize>,
    p: &LstmDirectionParams,
    out: &mut Matrix,
    column: usize,
) -> DirectionCache {
    let hidden = p.hidden();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut steps = Vec::with_capacity(positions.len());
    for &t in &positions {
        let cache = cell_step(sentence.vector(t), &h, &c, p);
        h = h_of(&cache);
        c.clone_from(&cache.c);
        let cols = out.cols;
        out.data[t * cols + column..t * cols + column + hidden].copy_from_slice(&h);
        steps.push(cache);
    }
    DirectionCache { positions, steps }
}

/// Runs the forward direction left to right and the backward direction right
/// to left over the unmasked positions of `sentence`.
pub fn blstm_forward(sentence: &Sentence, p: &BiLstmParams) -> Result<BlstmOutput> {
    let hidden = p.fwd.hidden();
    if sentence.dim() != p.fwd.dim() {
        return Err(Error::Usage(format!(
            "sentence dim {} does not match model dim {}",
            sentence.dim(),
            p.fwd.dim()
        )));
    }
    if sentence.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite token vector".into()));
    }
    let mut out = Matrix::zeros(sentence.len(), 2 * hidden);
    let positions: Vec<usize> = (0..sentence.len()).filter(|&t| sentence.mask()[t]).collect();
    let reversed: Vec<usize> = positions.iter().rev().copied().collect();
    let fwd = run_direction(sentence, positions, &p.fwd, &mut out, 0);
    let bwd = run_direction(sentence, reversed, &p.bwd, &mut out, hidden);
    Ok(BlstmOutput {
        hidden: out,
        cache: BlstmCache { fwd, bwd },
    })
}

fn backprop_direction(
    sentence: &Sentence,
    cache: &DirectionCache,
    d_hidden: &Matrix,
    column: usize,
    p: &LstmDirectionParams,
    grads: &mut LstmDirectionParams,
) {
    let hidden = p.hidden();
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    for (step, &t) in cache.steps.iter().zip(&cache.positions).rev() {
        let row = d_hidden.row(t);
        let dh: Vec<f64> = (0..hidden).map(|k| row[column + k] + dh_next[k]).collect();
        let (dh_prev, dc_prev) = lstm_cell_backward(sentence.vector(t), step, &dh, &dc_next, p, grads);
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
}

/// Accumulates parameter gradients given `d_hidden`, the gradient of the
/// loss with respect to every row of the BLSTM output.
pub fn blstm_backward(
    sentence: &Sentence,
    p: &BiLstmParams,
    cache: &BlstmCache,
    d_hidden: &Matrix,
    grads: &mut BiLstmParams,
) {
    let hidden = p.fwd.hidden();
    backprop_direction(sentence, &cache.fwd, d_hidden, 0, &p.fwd, &mut grads.fwd);
    backprop_direction(sentence, &cache.bwd, d_hidden, hidden, &p.bwd, &mut grads.bwd);
}
