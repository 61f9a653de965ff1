//! Minibatch Adam fine-tuning with validation-based model selection.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, random_init, streams, RunConfig};
use crate::de::substream;
use crate::embedding::{PairDataset, SentencePair};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::loss::Loss;
use crate::network::{
    gradient_vector, model_forward, predict, unflatten, Adam, AdamConfig, Checkpoint, Manifest, ModelParams,
    ParamVector,
};

/// Mean of `loss` over `data` under `params`.
pub fn mean_loss(params: &ModelParams, data: &PairDataset, loss: &Loss) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let values: Vec<f64> = data
        .pairs
        .par_iter()
        .map(|p| predict(p, params).map(|prob| loss.value(prob, p.label)))
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / data.len() as f64)
}

/// Flat weights plus optimizer state.
pub struct Trainer {
    params: ParamVector,
    adam: Adam,
    loss: Loss,
}

impl Trainer {
    pub fn new(init: ParamVector, adam: AdamConfig, loss: Loss) -> Self {
        let n = init.len();
        Self {
            params: init,
            adam: Adam::new(adam, n),
            loss,
        }
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn manifest(&self) -> &Manifest {
        &self.params.manifest
    }

    pub fn loss(&self) -> &Loss {
        &self.loss
    }

    pub fn model(&self) -> Result<ModelParams> {
        unflatten(&self.params.values, &self.params.manifest)
    }

    pub fn steps(&self) -> u64 {
        self.adam.steps()
    }

    /// One Adam step on the mean loss of `batch`; returns that mean loss
    /// before the update.
    pub fn step(&mut self, batch: &[&SentencePair]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Usage("empty minibatch".into()));
        }
        let model = self.model()?;
        let manifest = &self.params.manifest;
        let loss = &self.loss;
        let parts: Vec<(f64, ParamVector)> = batch
            .par_iter()
            .map(|pair| {
                let (p, cache) = model_forward(pair, &model)?;
                let g = gradient_vector(pair, &model, &cache, loss.grad(p, pair.label), manifest)?;
                Ok((loss.value(p, pair.label), g))
            })
            .collect::<Result<_>>()?;
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        for (l, g) in &parts {
            total += l;
            for (a, b) in grad.iter_mut().zip(&g.values) {
                *a += b;
            }
        }
        grad.iter_mut().for_each(|g| *g *= scale);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient at step {}",
                self.adam.steps() + 1
            )));
        }
        self.adam.step(&mut self.params.values, &grad);
        Ok(total * scale)
    }

    /// One pass over `data` in the given order, `after_step` called after
    /// every update. Returns the mean of the minibatch losses.
    pub fn run_epoch<F>(
        &mut self,
        data: &PairDataset,
        order: &[usize],
        batch_size: usize,
        mut after_step: F,
    ) -> Result<f64>
    where
        F: FnMut(&Trainer) -> Result<()>,
    {
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size.max(1)) {
            let batch: Vec<&SentencePair> = chunk.iter().map(|&i| &data.pairs[i]).collect();
            sum += self.step(&batch)?;
            batches += 1;
            after_step(self)?;
        }
        Ok(if batches == 0 { 0.0 } else { sum / batches as f64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub valid_g_means: Option<f64>,
    pub valid_accuracy: Option<f64>,
}

pub fn write_epoch_log(path: &Path, rows: &[EpochLog]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    write_atomic(path, |w| {
        writeln!(w, "epoch,train_loss,valid_loss,valid_g_means,valid_accuracy")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                opt(r.valid_loss),
                opt(r.valid_g_means),
                opt(r.valid_accuracy)
            )?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Epoch whose weights were kept (1-based).
    pub best_epoch: usize,
    /// Positive-class weight actually used by the focal loss.
    pub alpha: f64,
}

/// Fine-tunes `init` (random weights when `None`). With a validation split,
/// keeps the epoch with the highest G-means, ties going to the lower
/// validation loss, and stops after `patience` epochs without improvement.
/// Without one, keeps the last epoch.
pub fn finetune(
    cfg: &RunConfig,
    train: &PairDataset,
    valid: Option<&PairDataset>,
    init: Option<&Checkpoint>,
) -> Result<FinetuneOutcome> {
    train.require_both_classes("train")?;
    let shape = cfg.model.shape(train.dim)?;
    let init = match init {
        Some(c) => {
            if c.params.manifest.shape.dim != train.dim {
                return Err(Error::Config(format!(
                    "checkpoint expects {}-dimensional vectors, data has {}",
                    c.params.manifest.shape.dim, train.dim
                )));
            }
            if c.params.manifest.shape != shape {
                log::warn!("checkpoint shape differs from the model config; using the checkpoint's");
            }
            c.params.clone()
        }
        None => random_init(cfg, train.dim)?,
    };
    let alpha_default = train.class_counts().inverse_frequency_alpha();
    let loss = cfg.finetune.loss(alpha_default);
    let ft = &cfg.finetune;
    let mut trainer = Trainer::new(init, ft.adam, loss);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(ft.epochs);
    let mut best: Option<(f64, f64, usize, ParamVector)> = None;
    let mut stale = 0usize;

    for epoch in 1..=ft.epochs {
        let mut rng = substream(cfg.seed, streams::EPOCH_BASE + epoch as u64);
        order.shuffle(&mut rng);
        let train_loss = trainer.run_epoch(train, &order, ft.batch_size, |_| Ok(()))?;
        let mut row = EpochLog {
            epoch,
            train_loss,
            valid_loss: None,
            valid_g_means: None,
            valid_accuracy: None,
        };
        if let Some(v) = valid {
            let model = trainer.model()?;
            let (_, metrics) = evaluate(&model, v, cfg.threshold)?;
            let vl = mean_loss(&model, v, &loss)?;
            let g = metrics.g_means.value;
            row.valid_loss = Some(vl);
            row.valid_g_means = Some(g);
            row.valid_accuracy = Some(metrics.accuracy.value);
            let better = match &best {
                None => true,
                Some((bg, bl, _, _)) => g > *bg || (g == *bg && vl < *bl),
            };
            if better {
                best = Some((g, vl, epoch, trainer.params().clone()));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        log::info!(
            "epoch {epoch} train loss {:.6}{}",
            row.train_loss,
            match (row.valid_loss, row.valid_g_means) {
                (Some(l), Some(g)) => format!(" valid loss {l:.6} g_means {g:.4}"),
                _ => String::new(),
            }
        );
        log.push(row);
        if let Some(p) = ft.patience {
            if valid.is_some() && stale >= p {
                log::info!("no validation improvement for {p} epochs; stopping");
                break;
            }
        }
    }

    let (best_epoch, params) = match best {
        Some((_, _, e, p)) => (e, p),
        None => (log.len(), trainer.params().clone()),
    };
    Ok(FinetuneOutcome {
        checkpoint: Checkpoint::new("finetuned", cfg.data.seq_len, params),
        log,
        best_epoch,
        alpha: loss.focal.alpha,
    })
}
