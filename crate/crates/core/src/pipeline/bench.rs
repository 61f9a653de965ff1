//! Plain DE against IDE on the benchmark functions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{median, output_path, RunConfig, Stage};
use crate::de::benchmarks::BenchFunction;
use crate::de::{self, write_trace_csv, Strategy};
use crate::error::Result;
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub function: BenchFunction,
    pub strategy: Strategy,
    pub seed: u64,
    pub best_objective: f64,
    pub fes_used: usize,
    pub generations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMedian {
    pub function: BenchFunction,
    pub strategy: Strategy,
    pub median_best: f64,
}

pub fn medians(rows: &[BenchRow]) -> Vec<BenchMedian> {
    let mut out: Vec<BenchMedian> = Vec::new();
    for r in rows {
        if out.iter().any(|m| m.function == r.function && m.strategy == r.strategy) {
            continue;
        }
        let values: Vec<f64> = rows
            .iter()
            .filter(|x| x.function == r.function && x.strategy == r.strategy)
            .map(|x| x.best_objective)
            .collect();
        out.push(BenchMedian {
            function: r.function,
            strategy: r.strategy,
            median_best: median(&values),
        });
    }
    out
}

/// Runs both strategies on every configured function for seeds
/// `0..bench.seeds`, writing one trace per run under `bench/` plus
/// `summary.csv` and `medians.csv`.
pub fn run_bench(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    cfg.validate(Stage::Bench)?;
    let b = &cfg.bench;
    let mut rows = Vec::new();
    for &function in &b.functions {
        let bounds = function.bounds(b.dim);
        let objective = |x: &[f64]| Ok(function.eval(x));
        for strategy in [Strategy::De, Strategy::Ide] {
            for seed in 0..b.seeds {
                let out = de::run(strategy, &objective, &b.de.with_seed(seed), &bounds)?;
                let last = out.trace.last().copied();
                let path = output_path(cfg, &format!("bench/{}_{strategy}_seed{seed}.csv", function.name()))?;
                write_trace_csv(&path, &out.trace)?;
                rows.push(BenchRow {
                    function,
                    strategy,
                    seed,
                    best_objective: out.best_objective,
                    fes_used: last.map_or(0, |r| r.fes_used),
                    generations: last.map_or(0, |r| r.generation),
                });
            }
            log::info!("{} {strategy}: {} runs done", function.name(), b.seeds);
        }
    }
    write_atomic(&output_path(cfg, "summary.csv")?, |w| {
        writeln!(w, "function,strategy,seed,best_objective,fes_used,generations")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{:e},{},{}",
                r.function.name(),
                r.strategy,
                r.seed,
                r.best_objective,
                r.fes_used,
                r.generations
            )?;
        }
        Ok(())
    })?;
    write_atomic(&output_path(cfg, "medians.csv")?, |w| {
        writeln!(w, "function,strategy,median_best")?;
        for m in medians(&rows) {
            writeln!(w, "{},{},{:e}", m.function.name(), m.strategy, m.median_best)?;
        }
        Ok(())
    })?;
    Ok(rows)
}
