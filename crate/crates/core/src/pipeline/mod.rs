//! End-to-end stages: preprocessing, evolutionary pre-training, gradient
//! fine-tuning, evaluation, ranking and optimizer benchmarks.

pub mod bench;
pub mod config;
pub mod finetune;
pub mod report;

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::de::{self, write_trace_csv, TraceRow};
use crate::embedding::{embed_sentence, load_pair_dataset, load_table, EmbeddingTable, PairDataset, SentencePair};
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_string_atomic};
use crate::loss::de_objective;
use crate::metrics::{confusion, metric_suite, ConfusionCounts, MetricSuite};
use crate::network::{
    flatten, load_checkpoint, predict, save_checkpoint, unflatten, Checkpoint, ModelParams, ParamVector,
};
use crate::raw::{load_tsv, write_tsv, RawPair};
use crate::synth::{generate_splits, SynthConfig};
use crate::text::{preprocess, StopList};

pub use bench::{run_bench, BenchRow};
pub use config::{RunConfig, Stage};
pub use finetune::{finetune, mean_loss, EpochLog, FinetuneOutcome, Trainer};
pub use report::{EvalReport, Protocol};

pub const PRETRAINED_FILE: &str = "pretrained.ckpt";
pub const FINETUNED_FILE: &str = "finetuned.ckpt";

/// Random streams of a run seed, kept apart from the per-generation streams
/// of the optimizer.
pub(crate) mod streams {
    pub const SUBSAMPLE: u64 = 1 << 40;
    pub const RANDOM_INIT: u64 = (1 << 40) + 1;
    pub const EPOCH_BASE: u64 = 1 << 41;
}

/// Caps the worker pool used for objective and evaluation waves. Results do
/// not depend on the count. Only the first call in a process takes effect.
pub fn init_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))
}

pub fn load_stoplist(cfg: &RunConfig) -> Result<StopList> {
    match &cfg.embedding.stopwords {
        Some(p) => StopList::load(p),
        None => Ok(StopList::english()),
    }
}

/// Preprocesses and embeds raw pairs. Pairs with a side that is empty after
/// preprocessing are skipped; their ids are returned.
pub fn embed_pairs(
    rows: &[RawPair],
    stoplist: &StopList,
    table: &EmbeddingTable,
    len: usize,
) -> Result<(PairDataset, Vec<String>)> {
    let mut pairs = Vec::with_capacity(rows.len());
    let mut skipped = Vec::new();
    for r in rows {
        let a = preprocess(&r.source, stoplist);
        let b = preprocess(&r.suspicious, stoplist);
        if a.is_empty() || b.is_empty() {
            log::warn!("pair {} has no tokens left after preprocessing; skipped", r.id);
            skipped.push(r.id.clone());
            continue;
        }
        pairs.push(SentencePair {
            id: r.id.clone(),
            label: r.label,
            source: embed_sentence(&a, table, len),
            suspicious: embed_sentence(&b, table, len),
        });
    }
    Ok((PairDataset::new(pairs, table.dim(), len)?, skipped))
}

#[derive(Debug, Clone)]
pub struct PreprocessSummary {
    pub written: usize,
    pub skipped: Vec<String>,
}

/// Raw TSV in, JSONL pair dataset out.
pub fn cmd_preprocess(cfg: &RunConfig, input: &Path, output: &Path) -> Result<PreprocessSummary> {
    cfg.validate(Stage::Preprocess)?;
    if !input.is_file() {
        return Err(Error::Config(format!("input {} does not exist", input.display())));
    }
    let stoplist = load_stoplist(cfg)?;
    let table = load_table(cfg.embedding.table.as_deref().expect("validated"))?;
    let rows = load_tsv(input)?;
    let (data, skipped) = embed_pairs(&rows, &stoplist, &table, cfg.data.seq_len)?;
    crate::embedding::write_pair_dataset(output, &data)?;
    Ok(PreprocessSummary {
        written: data.len(),
        skipped,
    })
}

/// `name` under the output directory, creating parent directories.
fn output_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    let path = cfg.output_dir.join(name);
    let dir = path.parent().unwrap_or(&cfg.output_dir);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(path)
}

fn load_split(path: &Option<PathBuf>, cfg: &RunConfig, what: &str) -> Result<PairDataset> {
    let path = path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("data.{what} is not set")))?;
    let data = load_pair_dataset(path, cfg.data.seq_len)?;
    if data.is_empty() {
        return Err(Error::Config(format!("{what} split {} has no pairs", path.display())));
    }
    Ok(data)
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    pub trace: Vec<TraceRow>,
    /// Pairs the objective was scored on.
    pub objective_pairs: usize,
}

/// Searches the flat weight vector with the configured optimizer, minimizing
/// the squared error over the training split (or its fixed subsample).
pub fn pretrain(cfg: &RunConfig, train: &PairDataset) -> Result<PretrainOutcome> {
    let shape = cfg.model.shape(train.dim)?;
    let manifest = shape.manifest();
    let data = match cfg.pretrain.subsample {
        Some(n) if n < train.len() => {
            let mut rng = de::substream(cfg.seed, streams::SUBSAMPLE);
            let mut idx = sample(&mut rng, train.len(), n).into_vec();
            idx.sort_unstable();
            train.subset(&idx)
        }
        _ => train.clone(),
    };
    let objective = |x: &[f64]| de_objective(&unflatten(x, &manifest)?, &data);
    let de_cfg = cfg.pretrain.de.with_seed(cfg.seed);
    let bounds = manifest.bounds(cfg.pretrain.bound_scale);
    log::info!(
        "pretraining {} parameters with {} (NP {}, {} evaluations) on {} pairs",
        manifest.dimension(),
        cfg.pretrain.strategy,
        de_cfg.np,
        de_cfg.max_fes,
        data.len()
    );
    let mut opt = de::Optimizer::new(&objective, &de_cfg, &bounds, cfg.pretrain.strategy)?;
    while !opt.is_done() {
        opt.step()?;
        if let Some(row) = opt.trace().last() {
            log::info!(
                "generation {} fes {} best {:.6} mean {:.6}",
                row.generation,
                row.fes_used,
                row.best_objective,
                row.mean_objective
            );
        }
    }
    let out = opt.finish();
    let params = ParamVector {
        values: out.best,
        manifest,
    };
    Ok(PretrainOutcome {
        checkpoint: Checkpoint::new("pretrained", cfg.data.seq_len, params),
        trace: out.trace,
        objective_pairs: data.len(),
    })
}

pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PretrainOutcome> {
    cfg.validate(Stage::Pretrain)?;
    let train = load_split(&cfg.data.train, cfg, "train")?;
    let out = pretrain(cfg, &train)?;
    save_checkpoint(&output_path(cfg, PRETRAINED_FILE)?, &out.checkpoint)?;
    write_trace_csv(&output_path(cfg, "pretrain_trace.csv")?, &out.trace)?;
    Ok(out)
}

/// Fine-tunes from `checkpoint` (default: the run's pretrained checkpoint),
/// or from random weights when `finetune.random_init` is set.
pub fn cmd_finetune(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<FinetuneOutcome> {
    cfg.validate(Stage::Finetune)?;
    let init = if cfg.finetune.random_init {
        None
    } else {
        let path = checkpoint
            .map(Path::to_path_buf)
            .unwrap_or_else(|| cfg.output_dir.join(PRETRAINED_FILE));
        if !path.is_file() {
            return Err(Error::Config(format!(
                "checkpoint {} does not exist (run pretrain first or use --random-init)",
                path.display()
            )));
        }
        Some(load_checkpoint(&path)?)
    };
    let train = load_split(&cfg.data.train, cfg, "train")?;
    let valid = match &cfg.data.valid {
        Some(_) => Some(load_split(&cfg.data.valid, cfg, "valid")?),
        None => None,
    };
    let out = finetune(cfg, &train, valid.as_ref(), init.as_ref())?;
    save_checkpoint(&output_path(cfg, FINETUNED_FILE)?, &out.checkpoint)?;
    finetune::write_epoch_log(&output_path(cfg, "finetune_log.csv")?, &out.log)?;
    Ok(out)
}

/// Model probabilities for every pair, in dataset order.
pub fn predict_all(params: &ModelParams, data: &PairDataset) -> Result<Vec<f64>> {
    data.pairs.par_iter().map(|p| predict(p, params)).collect()
}

pub fn evaluate(params: &ModelParams, data: &PairDataset, threshold: f64) -> Result<(ConfusionCounts, MetricSuite)> {
    let probs = predict_all(params, data)?;
    let counts = confusion(&probs, &data.labels(), threshold)?;
    Ok((counts, metric_suite(&counts)))
}

fn check_compatible(checkpoint: &Checkpoint, dim: usize, cfg: &RunConfig) -> Result<ModelParams> {
    let shape = &checkpoint.params.manifest.shape;
    if shape.dim != dim {
        return Err(Error::Config(format!(
            "checkpoint expects {}-dimensional vectors, data has {dim}",
            shape.dim
        )));
    }
    if checkpoint.seq_len != cfg.data.seq_len {
        log::warn!(
            "checkpoint was trained with sequence length {}, config uses {}",
            checkpoint.seq_len,
            cfg.data.seq_len
        );
    }
    checkpoint.model()
}

fn default_checkpoint(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Checkpoint> {
    let path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join(FINETUNED_FILE));
    if !path.is_file() {
        return Err(Error::Config(format!("checkpoint {} does not exist", path.display())));
    }
    load_checkpoint(&path)
}

pub fn evaluation_report(
    params: &ModelParams,
    data: &PairDataset,
    threshold: f64,
    checkpoint_tag: &str,
) -> Result<EvalReport> {
    let (counts, metrics) = evaluate(params, data, threshold)?;
    let classes = data.class_counts();
    Ok(EvalReport {
        protocol: Protocol {
            threshold,
            model_selection: report::MODEL_SELECTION.into(),
            checkpoint_tag: checkpoint_tag.into(),
            pairs: data.len(),
            positives: classes.positives,
            negatives: classes.negatives,
        },
        counts,
        metrics,
    })
}

/// Scores the test split and writes `report.csv` and `report.json`.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<EvalReport> {
    cfg.validate(Stage::Evaluate)?;
    let ckpt = default_checkpoint(cfg, checkpoint)?;
    let test = load_split(&cfg.data.test, cfg, "test")?;
    let params = check_compatible(&ckpt, test.dim, cfg)?;
    let report = evaluation_report(&params, &test, cfg.threshold, &ckpt.tag)?;
    report.save(&output_path(cfg, "report.csv")?, &output_path(cfg, "report.json")?)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    /// Position in the candidate list.
    pub index: usize,
    pub text: String,
    pub score: f64,
}

/// Candidates ordered by descending probability of being copied from
/// `source`; ties keep input order. Candidates with no tokens left after
/// preprocessing are left out.
pub fn rank(
    params: &ModelParams,
    table: &EmbeddingTable,
    stoplist: &StopList,
    seq_len: usize,
    source: &str,
    candidates: &[String],
) -> Result<Vec<Ranked>> {
    let src_tokens = preprocess(source, stoplist);
    if src_tokens.is_empty() {
        return Err(Error::Config(
            "source sentence has no tokens after preprocessing".into(),
        ));
    }
    let src = embed_sentence(&src_tokens, table, seq_len);
    let jobs: Vec<(usize, SentencePair)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, text)| {
            let tokens = preprocess(text, stoplist);
            if tokens.is_empty() {
                log::warn!("candidate {} has no tokens after preprocessing; skipped", i + 1);
                return None;
            }
            Some((
                i,
                SentencePair {
                    id: i.to_string(),
                    label: 0,
                    source: src.clone(),
                    suspicious: embed_sentence(&tokens, table, seq_len),
                },
            ))
        })
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|(_, pair)| predict(pair, params))
        .collect::<Result<_>>()?;
    let mut ranked: Vec<Ranked> = jobs
        .into_iter()
        .zip(scores)
        .map(|((index, _), score)| Ranked {
            index,
            text: candidates[index].clone(),
            score,
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    Ok(ranked)
}

/// Ranks the non-empty lines of `candidates_path` against `source`.
pub fn cmd_rank(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    source: &str,
    candidates_path: &Path,
) -> Result<Vec<Ranked>> {
    cfg.validate(Stage::Rank)?;
    if !candidates_path.is_file() {
        return Err(Error::Config(format!(
            "candidate file {} does not exist",
            candidates_path.display()
        )));
    }
    let ckpt = default_checkpoint(cfg, checkpoint)?;
    let table = load_table(cfg.embedding.table.as_deref().expect("validated"))?;
    let params = check_compatible(&ckpt, table.dim(), cfg)?;
    let stoplist = load_stoplist(cfg)?;
    let text = std::fs::read_to_string(candidates_path).map_err(|e| Error::io(candidates_path, e))?;
    let candidates: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    rank(&params, &table, &stoplist, cfg.data.seq_len, source, &candidates)
}

/// Files written by [`cmd_synth`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub table: PathBuf,
    pub config: PathBuf,
}

/// Writes a synthetic corpus to `dir`: raw TSV splits, the embedding table
/// and a starter `config.json` that points at the preprocessed JSONL files
/// (`train.jsonl`, `valid.jsonl`, `test.jsonl`) next to them.
pub fn cmd_synth(dir: &Path, synth: &SynthConfig, sizes: (usize, usize, usize)) -> Result<SynthFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let splits = generate_splits(synth, sizes.0, sizes.1, sizes.2)?;
    let files = SynthFiles {
        train: dir.join("train.tsv"),
        valid: dir.join("valid.tsv"),
        test: dir.join("test.tsv"),
        table: dir.join("table.txt"),
        config: dir.join("config.json"),
    };
    for (path, rows) in [
        (&files.train, &splits.train),
        (&files.valid, &splits.valid),
        (&files.test, &splits.test),
    ] {
        write_atomic(path, |w| write_tsv(w, rows))?;
    }
    write_atomic(&files.table, |w| splits.table.write(w))?;
    let mut cfg = RunConfig::default();
    cfg.seed = synth.seed;
    cfg.data.train = Some("train.jsonl".into());
    cfg.data.valid = Some("valid.jsonl".into());
    cfg.data.test = Some("test.jsonl".into());
    cfg.embedding.table = Some("table.txt".into());
    let text = serde_json::to_string_pretty(&cfg).map_err(|e| Error::Numeric(e.to_string()))?;
    write_string_atomic(&files.config, &(text + "\n"))?;
    Ok(files)
}

/// Random weights for the configured shape, drawn from the run seed.
pub fn random_init(cfg: &RunConfig, dim: usize) -> Result<ParamVector> {
    let shape = cfg.model.shape(dim)?;
    let mut rng = de::substream(cfg.seed, streams::RANDOM_INIT);
    let params = ModelParams::random(&shape, &mut rng);
    Ok(flatten(&params, &shape.manifest()))
}

/// Median of `values`; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn empty_sides_are_skipped() {
        let mut table = EmbeddingTable::new(2);
        table.insert("cat", vec![1.0, 0.0]);
        let rows = vec![
            RawPair {
                id: "a".into(),
                source: "The cat!".into(),
                suspicious: "cat".into(),
                label: 1,
            },
            RawPair {
                id: "b".into(),
                source: "the of and".into(),
                suspicious: "cat".into(),
                label: 0,
            },
        ];
        let (data, skipped) = embed_pairs(&rows, &StopList::english(), &table, 4).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(skipped, vec!["b".to_string()]);
        assert_eq!(data.pairs[0].source.real_len(), 1);
    }
}
