//! JSON run configuration. Relative paths are resolved against the directory
//! of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::de::benchmarks::BenchFunction;
use crate::de::{DeConfig, Strategy};
use crate::embedding::DEFAULT_SEQ_LEN;
use crate::error::{Error, Result};
use crate::loss::{FocalConfig, Loss, LossKind};
use crate::metrics::DEFAULT_THRESHOLD;
use crate::network::{AdamConfig, ModelShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub embedding: EmbeddingConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    /// Decision threshold on the predicted probability.
    pub threshold: f64,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            embedding: EmbeddingConfig::default(),
            model: ModelConfig::default(),
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Pair datasets in JSONL form.
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Padded sentence length.
    pub seq_len: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            valid: None,
            test: None,
            seq_len: DEFAULT_SEQ_LEN,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Text embedding table used to embed raw sentences.
    pub table: Option<PathBuf>,
    /// Stop-word list, one word per line; the bundled English list if unset.
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Word-vector dimension; taken from the data when unset.
    pub dim: Option<usize>,
    pub hidden: usize,
    pub attention: usize,
    /// Hidden widths of the head; `[2 * hidden]` when unset.
    pub head_hidden: Option<Vec<usize>>,
    pub tied_lstm: bool,
    pub tied_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: None,
            hidden: 32,
            attention: 16,
            head_hidden: None,
            tied_lstm: true,
            tied_attention: false,
        }
    }
}

impl ModelConfig {
    pub fn shape(&self, data_dim: usize) -> Result<ModelShape> {
        if let Some(d) = self.dim {
            if d != data_dim {
                return Err(Error::Config(format!(
                    "model.dim is {d} but the data has {data_dim}-dimensional vectors"
                )));
            }
        }
        let mut shape = ModelShape::new(data_dim, self.hidden, self.attention);
        if let Some(h) = &self.head_hidden {
            shape.head_hidden = h.clone();
        }
        shape.tied_lstm = self.tied_lstm;
        shape.tied_attention = self.tied_attention;
        shape.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(shape)
    }
}

/// Optimizer settings; the seed comes from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeSettings {
    pub np: usize,
    pub f: f64,
    pub cr: f64,
    pub max_fes: usize,
    pub m: Option<usize>,
}

impl Default for DeSettings {
    fn default() -> Self {
        let d = DeConfig::default();
        Self {
            np: d.np,
            f: d.f,
            cr: d.cr,
            max_fes: d.max_fes,
            m: d.m,
        }
    }
}

impl DeSettings {
    pub fn with_seed(&self, seed: u64) -> DeConfig {
        DeConfig {
            np: self.np,
            f: self.f,
            cr: self.cr,
            max_fes: self.max_fes,
            m: self.m,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub strategy: Strategy,
    pub de: DeSettings,
    /// Score the objective on a fixed random subset of this many training
    /// pairs, drawn once per run.
    pub subsample: Option<usize>,
    /// Multiplier on the per-block `1/sqrt(fan_in)` search bounds.
    pub bound_scale: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Ide,
            de: DeSettings::default(),
            subsample: None,
            bound_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FocalSettings {
    pub gamma: f64,
    /// Positive-class weight; the training split's negative fraction when unset.
    pub alpha: Option<f64>,
}

impl Default for FocalSettings {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub loss: LossKind,
    pub focal: FocalSettings,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without a validation G-means improvement before stopping.
    pub patience: Option<usize>,
    /// Start from random weights instead of the pretrained checkpoint.
    pub random_init: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Focal,
            focal: FocalSettings::default(),
            adam: AdamConfig {
                learning_rate: 1e-3,
                ..AdamConfig::default()
            },
            epochs: 50,
            batch_size: 32,
            patience: Some(10),
            random_init: false,
        }
    }
}

impl FinetuneConfig {
    /// The configured loss, with alpha defaulted from the training split.
    pub fn loss(&self, default_alpha: f64) -> Loss {
        Loss {
            kind: self.loss,
            focal: FocalConfig {
                gamma: self.focal.gamma,
                alpha: self.focal.alpha.unwrap_or(default_alpha),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub functions: Vec<BenchFunction>,
    pub dim: usize,
    /// Runs per function and strategy, seeded `0..seeds`.
    pub seeds: u64,
    pub de: DeSettings,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            functions: BenchFunction::ALL.to_vec(),
            dim: 10,
            seeds: 21,
            de: DeSettings {
                np: 50,
                max_fes: 20_000,
                ..DeSettings::default()
            },
        }
    }
}

/// What a command needs from the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Preprocess,
    Pretrain,
    Finetune,
    Evaluate,
    Rank,
    Bench,
}

fn require_file(what: &str, path: &Option<PathBuf>) -> Result<()> {
    match path {
        None => Err(Error::Config(format!("{what} is not set"))),
        Some(p) if !p.is_file() => Err(Error::Config(format!("{what} {} does not exist", p.display()))),
        Some(_) => Ok(()),
    }
}

fn optional_file(what: &str, path: &Option<PathBuf>) -> Result<()> {
    match path {
        Some(p) if !p.is_file() => Err(Error::Config(format!("{what} {} does not exist", p.display()))),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    /// Makes every relative path relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.data.train,
            &mut self.data.valid,
            &mut self.data.test,
            &mut self.embedding.table,
            &mut self.embedding.stopwords,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    /// Range checks plus existence of the inputs `stage` reads.
    pub fn validate(&self, stage: Stage) -> Result<()> {
        if self.data.seq_len == 0 {
            return Err(Error::Config("data.seq_len must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        if self.model.hidden == 0 || self.model.attention == 0 {
            return Err(Error::Config(
                "model.hidden and model.attention must be positive".into(),
            ));
        }
        self.pretrain.de.with_seed(self.seed).validate()?;
        if !(self.pretrain.bound_scale > 0.0 && self.pretrain.bound_scale.is_finite()) {
            return Err(Error::Config("pretrain.bound_scale must be positive".into()));
        }
        if self.pretrain.subsample == Some(0) {
            return Err(Error::Config("pretrain.subsample must be positive".into()));
        }
        let ft = &self.finetune;
        FocalConfig {
            gamma: ft.focal.gamma,
            alpha: ft.focal.alpha.unwrap_or(0.5),
        }
        .validate()?;
        if ft.batch_size == 0 || ft.epochs == 0 {
            return Err(Error::Config(
                "finetune.epochs and finetune.batch_size must be positive".into(),
            ));
        }
        if !(ft.adam.learning_rate > 0.0)
            || !(0.0..1.0).contains(&ft.adam.beta1)
            || !(0.0..1.0).contains(&ft.adam.beta2)
            || !(ft.adam.epsilon > 0.0)
        {
            return Err(Error::Config("finetune.adam settings are out of range".into()));
        }
        if ft.patience == Some(0) {
            return Err(Error::Config("finetune.patience must be positive".into()));
        }
        optional_file("embedding.stopwords", &self.embedding.stopwords)?;
        match stage {
            Stage::Preprocess | Stage::Rank => require_file("embedding.table", &self.embedding.table)?,
            Stage::Pretrain => require_file("data.train", &self.data.train)?,
            Stage::Finetune => {
                require_file("data.train", &self.data.train)?;
                optional_file("data.valid", &self.data.valid)?;
            }
            Stage::Evaluate => require_file("data.test", &self.data.test)?,
            Stage::Bench => {
                self.bench.de.with_seed(0).validate()?;
                if self.bench.dim == 0 || self.bench.seeds == 0 || self.bench.functions.is_empty() {
                    return Err(Error::Config("bench needs functions, dim >= 1 and seeds >= 1".into()));
                }
                if self.bench.de.max_fes < self.bench.de.np {
                    return Err(Error::Config("bench.de.max_fes is below the population size".into()));
                }
            }
        }
        if stage == Stage::Pretrain && self.pretrain.de.max_fes < self.pretrain.de.np {
            return Err(Error::Config("pretrain.de.max_fes is below the population size".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.pretrain.de.np, 200);
        assert_eq!(cfg.pretrain.de.max_fes, 3000);
        assert_eq!(cfg.finetune.epochs, 50);
        assert_eq!(cfg.finetune.batch_size, 32);
        cfg.validate(Stage::Bench).unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"model": {"hiden": 3}}"#).is_err());
    }

    #[test]
    fn missing_inputs_are_config_errors() {
        let cfg = RunConfig::default();
        assert!(matches!(cfg.validate(Stage::Pretrain), Err(Error::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.data.test = Some(PathBuf::from("/no/such/file.jsonl"));
        assert!(matches!(cfg.validate(Stage::Evaluate), Err(Error::Config(_))));
    }

    #[test]
    fn ranges_are_checked() {
        let mut cfg = RunConfig::default();
        cfg.threshold = 1.5;
        assert!(cfg.validate(Stage::Bench).is_err());
        let mut cfg = RunConfig::default();
        cfg.pretrain.de.cr = -0.1;
        assert!(cfg.validate(Stage::Bench).is_err());
        let mut cfg = RunConfig::default();
        cfg.finetune.focal.alpha = Some(2.0);
        assert!(cfg.validate(Stage::Bench).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut cfg = RunConfig::default();
        cfg.data.train = Some(PathBuf::from("train.jsonl"));
        cfg.data.test = Some(PathBuf::from("/abs/test.jsonl"));
        cfg.resolve_paths(Path::new("/runs/a"));
        assert_eq!(cfg.data.train.unwrap(), PathBuf::from("/runs/a/train.jsonl"));
        assert_eq!(cfg.data.test.unwrap(), PathBuf::from("/abs/test.jsonl"));
        assert_eq!(cfg.output_dir, PathBuf::from("/runs/a/out"));
    }

    #[test]
    fn shape_checks_dim() {
        let m = ModelConfig {
            dim: Some(8),
            ..ModelConfig::default()
        };
        assert!(m.shape(16).is_err());
        let s = ModelConfig::default().shape(16).unwrap();
        assert_eq!(s.head_hidden, vec![64]);
    }
}
