use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pd_core::de::benchmarks::BenchFunction;
use pd_core::de::Strategy;
use pd_core::loss::LossKind;
use pd_core::pipeline::{self, RunConfig};
use pd_core::synth::SynthConfig;
use pd_core::{Error, Result};

/// Sentence-pair plagiarism detection: preprocessing, evolutionary
/// pre-training, fine-tuning, evaluation and ranking.
#[derive(Parser)]
#[command(name = "pd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize, stem and embed a raw TSV file into a JSONL pair dataset.
    Preprocess {
        #[command(flatten)]
        common: Common,
        /// Raw pairs: id, source_text, suspicious_text, label.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Search initial weights with DE or IDE on the training split.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<Strategy>,
        #[arg(long)]
        np: Option<usize>,
        #[arg(long)]
        max_fes: Option<usize>,
        /// Score the objective on this many training pairs.
        #[arg(long)]
        subsample: Option<usize>,
    },
    /// Train with Adam from the pretrained checkpoint.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Starting checkpoint; `<output_dir>/pretrained.ckpt` by default.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        valid: Option<PathBuf>,
        /// `fl` (focal) or `ce` (cross-entropy).
        #[arg(long)]
        loss: Option<LossKind>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        /// Start from random weights and ignore any checkpoint.
        #[arg(long)]
        random_init: bool,
    },
    /// Score the test split and write report.csv / report.json.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// `<output_dir>/finetuned.ckpt` by default.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Rank candidate sentences (one per line) against a source sentence.
    Rank {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        source: String,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Print only the first N candidates.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Compare DE and IDE on sphere, Rosenbrock and Rastrigin.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        functions: Option<Vec<BenchFunction>>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        np: Option<usize>,
        #[arg(long)]
        max_fes: Option<usize>,
    },
    /// Write a synthetic corpus, its embedding table and a starter config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        train: usize,
        #[arg(long, default_value_t = 400)]
        valid: usize,
        #[arg(long, default_value_t = 400)]
        test: usize,
        /// Positive pairs per negative pair.
        #[arg(long)]
        imbalance: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run config; relative paths inside it resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seq_len: Option<usize>,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    match s {
        "de" => Ok(Strategy::De),
        "ide" => Ok(Strategy::Ide),
        other => Err(format!("unknown strategy {other:?} (expected de or ide)")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_some<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                if !p.is_file() {
                    return Err(Error::Config(format!("config {} does not exist", p.display())));
                }
                RunConfig::load(p)?
            }
            None => RunConfig::default(),
        };
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.output_dir, self.output_dir.clone());
        set(&mut cfg.data.seq_len, self.seq_len);
        Ok(cfg)
    }
}

fn configure_threads() -> Result<()> {
    match std::env::var("PD_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("PD_THREADS must be a positive integer, got {v:?}")))?;
            pipeline::init_threads(n)
        }
        Err(_) => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Preprocess {
            common,
            input,
            output,
            table,
            stopwords,
        } => {
            let mut cfg = common.load()?;
            set_some(&mut cfg.embedding.table, table);
            set_some(&mut cfg.embedding.stopwords, stopwords);
            let s = pipeline::cmd_preprocess(&cfg, &input, &output)?;
            println!("wrote {} pairs to {}", s.written, output.display());
            if !s.skipped.is_empty() {
                println!("skipped {} pairs with an empty side", s.skipped.len());
            }
        }
        Command::Pretrain {
            common,
            train,
            strategy,
            np,
            max_fes,
            subsample,
        } => {
            let mut cfg = common.load()?;
            set_some(&mut cfg.data.train, train);
            set(&mut cfg.pretrain.strategy, strategy);
            set(&mut cfg.pretrain.de.np, np);
            set(&mut cfg.pretrain.de.max_fes, max_fes);
            set_some(&mut cfg.pretrain.subsample, subsample);
            let out = pipeline::cmd_pretrain(&cfg)?;
            let last = out.trace.last();
            println!(
                "pretrained {} parameters: best objective {:.6} after {} evaluations",
                out.checkpoint.params.len(),
                last.map_or(f64::NAN, |r| r.best_objective),
                last.map_or(0, |r| r.fes_used)
            );
        }
        Command::Finetune {
            common,
            checkpoint,
            train,
            valid,
            loss,
            gamma,
            alpha,
            lr,
            epochs,
            batch_size,
            patience,
            random_init,
        } => {
            let mut cfg = common.load()?;
            set_some(&mut cfg.data.train, train);
            set_some(&mut cfg.data.valid, valid);
            set(&mut cfg.finetune.loss, loss);
            set(&mut cfg.finetune.focal.gamma, gamma);
            set_some(&mut cfg.finetune.focal.alpha, alpha);
            set(&mut cfg.finetune.adam.learning_rate, lr);
            set(&mut cfg.finetune.epochs, epochs);
            set(&mut cfg.finetune.batch_size, batch_size);
            set_some(&mut cfg.finetune.patience, patience);
            cfg.finetune.random_init |= random_init;
            let out = pipeline::cmd_finetune(&cfg, checkpoint.as_deref())?;
            let best = &out.log[out.best_epoch - 1];
            println!(
                "fine-tuned {} epochs, kept epoch {} (train loss {:.6}{})",
                out.log.len(),
                out.best_epoch,
                best.train_loss,
                best.valid_g_means
                    .map_or(String::new(), |g| format!(", valid g_means {g:.4}"))
            );
        }
        Command::Evaluate {
            common,
            checkpoint,
            test,
            threshold,
        } => {
            let mut cfg = common.load()?;
            set_some(&mut cfg.data.test, test);
            set(&mut cfg.threshold, threshold);
            let report = pipeline::cmd_evaluate(&cfg, checkpoint.as_deref())?;
            report
                .write_csv(std::io::stdout().lock())
                .map_err(|e| Error::Config(format!("cannot write to stdout: {e}")))?;
        }
        Command::Rank {
            common,
            checkpoint,
            source,
            candidates,
            table,
            stopwords,
            top,
        } => {
            let mut cfg = common.load()?;
            set_some(&mut cfg.embedding.table, table);
            set_some(&mut cfg.embedding.stopwords, stopwords);
            let ranked = pipeline::cmd_rank(&cfg, checkpoint.as_deref(), &source, &candidates)?;
            println!("rank\tscore\tline\ttext");
            for (i, r) in ranked.iter().take(top.unwrap_or(usize::MAX)).enumerate() {
                println!("{}\t{:.6}\t{}\t{}", i + 1, r.score, r.index + 1, r.text);
            }
        }
        Command::Bench {
            common,
            functions,
            dim,
            seeds,
            np,
            max_fes,
        } => {
            let mut cfg = common.load()?;
            set(&mut cfg.bench.functions, functions);
            set(&mut cfg.bench.dim, dim);
            set(&mut cfg.bench.seeds, seeds);
            set(&mut cfg.bench.de.np, np);
            set(&mut cfg.bench.de.max_fes, max_fes);
            let rows = pipeline::run_bench(&cfg)?;
            println!("function\tstrategy\tmedian_best");
            for m in pipeline::bench::medians(&rows) {
                println!("{}\t{}\t{:e}", m.function.name(), m.strategy, m.median_best);
            }
        }
        Command::Synth {
            out,
            train,
            valid,
            test,
            imbalance,
            dim,
            seed,
        } => {
            let mut synth = SynthConfig::default();
            set(&mut synth.imbalance, imbalance);
            set(&mut synth.dim, dim);
            set(&mut synth.seed, seed);
            let files = pipeline::cmd_synth(&out, &synth, (train, valid, test))?;
            print_synth_next_steps(&out, &files.config);
        }
    }
    Ok(())
}

fn print_synth_next_steps(dir: &Path, config: &Path) {
    println!("wrote synthetic corpus to {}", dir.display());
    for split in ["train", "valid", "test"] {
        println!(
            "  pd preprocess --config {} --input {} --output {}",
            config.display(),
            dir.join(format!("{split}.tsv")).display(),
            dir.join(format!("{split}.jsonl")).display()
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
