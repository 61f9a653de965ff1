//! Differential evolution: plain DE/rand/1/bin and the clustering variant
//! with group-based population replacement.

pub mod benchmarks;
pub mod operators;
pub mod trace;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{draw_k, kmeans, winner_cluster, DEFAULT_MAX_ITERS};
pub use operators::{binomial_crossover, clustering_mutation, de_selection, gpba_update, rand1_mutation, reflect};
pub use trace::{write_trace_csv, TraceRow};

/// Per-dimension `[lo, hi]` search box.
pub type Bounds = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeConfig {
    pub np: usize,
    pub f: f64,
    pub cr: f64,
    pub max_fes: usize,
    /// Clustering offspring per generation; `None` means `max(1, np / 5)`.
    pub m: Option<usize>,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            np: 200,
            f: 0.5,
            cr: 0.8,
            max_fes: 3000,
            m: None,
            seed: 0,
        }
    }
}

impl DeConfig {
    pub fn offspring_count(&self) -> usize {
        self.m.unwrap_or((self.np / 5).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.np < 4 {
            return Err(Error::Config(format!("population size must be >= 4, got {}", self.np)));
        }
        if !(self.f > 0.0 && self.f.is_finite()) {
            return Err(Error::Config(format!("scaling factor F must be > 0, got {}", self.f)));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err(Error::Config(format!(
                "crossover rate must be in [0, 1], got {}",
                self.cr
            )));
        }
        let m = self.offspring_count();
        if m < 1 || m > self.np {
            return Err(Error::Config(format!(
                "offspring count M must be in [1, {}], got {m}",
                self.np
            )));
        }
        Ok(())
    }
}

pub fn validate_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::Usage("search space has no dimensions".into()));
    }
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!(
                "bounds of dimension {j} are invalid: [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub members: Vec<Vec<f64>>,
    pub objectives: Vec<f64>,
    pub fes_used: usize,
    /// Best vector and objective seen so far.
    pub best: (Vec<f64>, f64),
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mean_objective(&self) -> f64 {
        self.objectives.iter().sum::<f64>() / self.objectives.len() as f64
    }

    /// Index of the best current member (lowest index on ties).
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, &o) in self.objectives.iter().enumerate() {
            if o < self.objectives[best] {
                best = i;
            }
        }
        best
    }

    /// Folds the current members into `best`.
    pub fn refresh_best(&mut self) {
        if self.members.is_empty() {
            return;
        }
        let i = self.best_index();
        if self.objectives[i] < self.best.1 || self.best.0.is_empty() {
            self.best = (self.members[i].clone(), self.objectives[i]);
        }
    }
}

/// Evaluates `xs` concurrently; non-finite objective values become `+inf`.
fn evaluate_all<F>(objective: &F, xs: &[Vec<f64>]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    xs.par_iter()
        .map(|x| objective(x).map(|v| if v.is_finite() { v } else { f64::INFINITY }))
        .collect()
}

/// Random stream for one phase of a run; stream 0 initializes the population
/// and stream `g` drives generation `g`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `NP` uniform members inside `bounds`, evaluated.
pub fn init_population<F>(objective: &F, cfg: &DeConfig, bounds: &[(f64, f64)]) -> Result<Population>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let mut rng = substream(cfg.seed, 0);
    let members: Vec<Vec<f64>> = (0..cfg.np)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                .collect()
        })
        .collect();
    let objectives = evaluate_all(objective, &members)?;
    let mut pop = Population {
        members,
        objectives,
        fes_used: cfg.np,
        best: (Vec::new(), f64::INFINITY),
    };
    pop.refresh_best();
    Ok(pop)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// DE/rand/1/bin.
    De,
    /// DE/rand/1/bin followed by clustering mutation and group replacement.
    Ide,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::De => "de",
            Strategy::Ide => "ide",
        })
    }
}

#[derive(Debug, Clone)]
pub struct DeOutcome {
    pub best: Vec<f64>,
    pub best_objective: f64,
    pub trace: Vec<TraceRow>,
    pub population: Population,
}

/// A run that can be advanced one generation at a time.
pub struct Optimizer<'a, F> {
    objective: &'a F,
    cfg: DeConfig,
    bounds: Bounds,
    strategy: Strategy,
    pop: Population,
    generation: u64,
    trace: Vec<TraceRow>,
}

impl<'a, F> Optimizer<'a, F>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    pub fn new(objective: &'a F, cfg: &DeConfig, bounds: &[(f64, f64)], strategy: Strategy) -> Result<Self> {
        cfg.validate()?;
        validate_bounds(bounds)?;
        if cfg.max_fes < cfg.np {
            return Err(Error::Usage(format!(
                "evaluation budget {} is smaller than the population size {}",
                cfg.max_fes, cfg.np
            )));
        }
        let per_generation = match strategy {
            Strategy::De => cfg.np,
            Strategy::Ide => cfg.np + cfg.offspring_count(),
        };
        let generations = (cfg.max_fes - cfg.np).div_ceil(per_generation);
        if generations < 5 {
            log::warn!(
                "budget of {} evaluations allows only {generations} generation(s) of {strategy} with NP = {}",
                cfg.max_fes,
                cfg.np
            );
        }
        let pop = init_population(objective, cfg, bounds)?;
        let trace = vec![TraceRow::new(0, &pop)];
        Ok(Self {
            objective,
            cfg: cfg.clone(),
            bounds: bounds.to_vec(),
            strategy,
            pop,
            generation: 0,
            trace,
        })
    }

    pub fn population(&self) -> &Population {
        &self.pop
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn is_done(&self) -> bool {
        self.pop.fes_used >= self.cfg.max_fes
    }

    fn de_pass(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let trials: Vec<Vec<f64>> = (0..self.pop.len())
            .map(|i| {
                let mutant = rand1_mutation(&self.pop.members, i, self.cfg.f, &self.bounds, rng);
                binomial_crossover(&self.pop.members[i], &mutant, self.cfg.cr, rng)
            })
            .collect();
        let scores = evaluate_all(self.objective, &trials)?;
        self.pop.fes_used += trials.len();
        for (i, (trial, score)) in trials.into_iter().zip(scores).enumerate() {
            if de_selection(self.pop.objectives[i], score) {
                self.pop.members[i] = trial;
                self.pop.objectives[i] = score;
            }
        }
        self.pop.refresh_best();
        Ok(())
    }

    fn clustering_pass(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let np = self.pop.len();
        let k = draw_k(np, rng).min(np);
        let seeds = sample(rng, np, k).into_vec();
        let clustering = kmeans(&self.pop.members, k, &seeds, DEFAULT_MAX_ITERS)?;
        let (_, win) = winner_cluster(&clustering, &self.pop.objectives)?;
        let m = self.cfg.offspring_count();
        let offspring = clustering_mutation(&self.pop.members, win, self.cfg.f, m, &self.bounds, rng);
        let scores = evaluate_all(self.objective, &offspring)?;
        self.pop.fes_used += offspring.len();
        gpba_update(&mut self.pop, offspring, scores, rng);
        Ok(())
    }

    /// Runs one generation; a no-op once the budget is spent.
    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Ok(());
        }
        self.generation += 1;
        let mut rng = substream(self.cfg.seed, self.generation);
        self.de_pass(&mut rng)?;
        if self.strategy == Strategy::Ide {
            self.clustering_pass(&mut rng)?;
        }
        self.trace.push(TraceRow::new(self.generation, &self.pop));
        Ok(())
    }

    pub fn run(mut self) -> Result<DeOutcome> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> DeOutcome {
        DeOutcome {
            best: self.pop.best.0.clone(),
            best_objective: self.pop.best.1,
            trace: self.trace,
            population: self.pop,
        }
    }
}

pub fn run_de<F>(objective: &F, cfg: &DeConfig, bounds: &[(f64, f64)]) -> Result<DeOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    Optimizer::new(objective, cfg, bounds, Strategy::De)?.run()
}

pub fn run_ide<F>(objective: &F, cfg: &DeConfig, bounds: &[(f64, f64)]) -> Result<DeOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    Optimizer::new(objective, cfg, bounds, Strategy::Ide)?.run()
}

pub fn run<F>(strategy: Strategy, objective: &F, cfg: &DeConfig, bounds: &[(f64, f64)]) -> Result<DeOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    Optimizer::new(objective, cfg, bounds, strategy)?.run()
}

#[cfg(test)]
mod tests {
    use super::benchmarks::sphere;
    use super::*;

    fn sphere_obj(x: &[f64]) -> Result<f64> {
        Ok(sphere(x))
    }

    fn small() -> DeConfig {
        DeConfig {
            np: 20,
            max_fes: 2000,
            seed: 3,
            ..DeConfig::default()
        }
    }

    #[test]
    fn init_is_in_bounds_and_deterministic() {
        let bounds = vec![(-2.0, 3.0); 5];
        let a = init_population(&sphere_obj, &small(), &bounds).unwrap();
        let b = init_population(&sphere_obj, &small(), &bounds).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fes_used, 20);
        for m in &a.members {
            assert!(m.iter().all(|x| (-2.0..=3.0).contains(x)));
        }
    }

    #[test]
    fn degenerate_bounds_give_zero_population() {
        let pop = init_population(&sphere_obj, &small(), &[(0.0, 0.0); 3]).unwrap();
        assert!(pop.members.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn config_validation() {
        let bad = [
            DeConfig { np: 3, ..small() },
            DeConfig { f: 0.0, ..small() },
            DeConfig { cr: 1.5, ..small() },
            DeConfig { m: Some(0), ..small() },
            DeConfig { m: Some(21), ..small() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
        assert_eq!(DeConfig::default().offspring_count(), 40);
        assert_eq!(DeConfig { np: 4, ..small() }.offspring_count(), 1);
    }

    #[test]
    fn budget_below_population_is_a_usage_error() {
        let cfg = DeConfig { max_fes: 10, ..small() };
        assert!(matches!(
            run_ide(&sphere_obj, &cfg, &[(-1.0, 1.0); 2]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn both_strategies_improve_and_respect_budget() {
        let bounds = vec![(-5.0, 5.0); 4];
        for strategy in [Strategy::De, Strategy::Ide] {
            let cfg = small();
            let out = run(strategy, &sphere_obj, &cfg, &bounds).unwrap();
            let m = cfg.offspring_count();
            assert!(out.population.fes_used >= cfg.max_fes);
            assert!(out.population.fes_used <= cfg.max_fes + cfg.np + m);
            assert!(out.best_objective < out.trace[0].best_objective);
            assert!(out.best_objective < 1e-2, "{strategy}: {}", out.best_objective);
            for w in out.trace.windows(2) {
                assert!(w[1].best_objective <= w[0].best_objective);
            }
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let bounds = vec![(-5.0, 5.0); 3];
        let cfg = small();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_ide(&sphere_obj, &cfg, &bounds).unwrap());
        let b = four.install(|| run_ide(&sphere_obj, &cfg, &bounds).unwrap());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.best, b.best);
    }

    #[test]
    fn non_finite_objectives_never_survive() {
        let nan_right = |x: &[f64]| Ok(if x[0] > 0.0 { f64::NAN } else { sphere(x) });
        let out = run_de(&nan_right, &small(), &[(-1.0, 1.0); 2]).unwrap();
        assert!(out.best_objective.is_finite());
        assert!(out.best[0] <= 0.0);
    }
}
