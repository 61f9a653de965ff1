//! Full pair model: BLSTM + attention per branch, then the similarity head.

use super::attention::{attention_backward, attention_pool, AttentionCache};
use super::head::{predictor_backward, predictor_forward, HeadCache};
use super::linalg::Matrix;
use super::lstm::{blstm_backward, blstm_forward, BlstmCache};
use super::params::{flatten, Branch, Manifest, ModelParams, ModelShape, ParamVector};
use crate::embedding::{Sentence, SentencePair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BranchCache {
    pub hidden: Matrix,
    pub blstm: BlstmCache,
    pub pooled: Vec<f64>,
    pub attention: AttentionCache,
}

/// Everything the backward pass needs from a forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub shape: ModelShape,
    pub seq_len: (usize, usize),
    pub source: BranchCache,
    pub suspicious: BranchCache,
    pub head: HeadCache,
}

impl ForwardCache {
    pub fn probability(&self) -> f64 {
        self.head.p
    }

    /// Attention weights of the (source, suspicious) sentences.
    pub fn attention_weights(&self) -> (&[f64], &[f64]) {
        (&self.source.attention.weights, &self.suspicious.attention.weights)
    }
}

fn branch_forward(sentence: &Sentence, params: &ModelParams, branch: Branch) -> Result<BranchCache> {
    let out = blstm_forward(sentence, params.lstm_for(branch))?;
    let (pooled, attention) = attention_pool(&out.hidden, sentence.mask(), params.attention_for(branch))?;
    Ok(BranchCache {
        hidden: out.hidden,
        blstm: out.cache,
        pooled,
        attention,
    })
}

/// Probability that `pair` is plagiarized, with the cache for backprop.
pub fn model_forward(pair: &SentencePair, params: &ModelParams) -> Result<(f64, ForwardCache)> {
    let source = branch_forward(&pair.source, params, Branch::Source)?;
    let suspicious = branch_forward(&pair.suspicious, params, Branch::Suspicious)?;
    let (p, head) = predictor_forward(&source.pooled, &suspicious.pooled, &params.head)?;
    Ok((
        p,
        ForwardCache {
            shape: params.shape.clone(),
            seq_len: (pair.source.len(), pair.suspicious.len()),
            source,
            suspicious,
            head,
        },
    ))
}

pub fn predict(pair: &SentencePair, params: &ModelParams) -> Result<f64> {
    model_forward(pair, params).map(|(p, _)| p)
}

fn branch_backward(
    sentence: &Sentence,
    params: &ModelParams,
    branch: Branch,
    cache: &BranchCache,
    d_pooled: &[f64],
    grads: &mut ModelParams,
) {
    let mut d_hidden = Matrix::zeros(cache.hidden.rows, cache.hidden.cols);
    attention_backward(
        &cache.hidden,
        params.attention_for(branch),
        &cache.attention,
        d_pooled,
        grads.attention_for_mut(branch),
        &mut d_hidden,
    );
    blstm_backward(
        sentence,
        params.lstm_for(branch),
        &cache.blstm,
        &d_hidden,
        grads.lstm_for_mut(branch),
    );
}

/// Exact gradient of a scalar loss with respect to every parameter, given
/// `d_loss_dp`, the derivative of the loss at the predicted probability.
/// Tied blocks receive the sum of both branch contributions.
pub fn model_backward(
    pair: &SentencePair,
    params: &ModelParams,
    cache: &ForwardCache,
    d_loss_dp: f64,
) -> Result<ModelParams> {
    if cache.shape != params.shape || cache.seq_len != (pair.source.len(), pair.suspicious.len()) {
        return Err(Error::Usage(
            "forward cache does not belong to this pair and model".into(),
        ));
    }
    let mut grads = ModelParams::zeros(&params.shape);
    let (d_sou, d_sus) = predictor_backward(
        &cache.source.pooled,
        &cache.suspicious.pooled,
        &params.head,
        &cache.head,
        d_loss_dp,
        &mut grads.head,
    );
    branch_backward(&pair.source, params, Branch::Source, &cache.source, &d_sou, &mut grads);
    branch_backward(
        &pair.suspicious,
        params,
        Branch::Suspicious,
        &cache.suspicious,
        &d_sus,
        &mut grads,
    );
    Ok(grads)
}

/// [`model_backward`] flattened in `manifest` order.
pub fn gradient_vector(
    pair: &SentencePair,
    params: &ModelParams,
    cache: &ForwardCache,
    d_loss_dp: f64,
    manifest: &Manifest,
) -> Result<ParamVector> {
    model_backward(pair, params, cache, d_loss_dp).map(|g| flatten(&g, manifest))
}
