//! The screened, warm-started genetic search plus budget-matched baselines.
//!
//! One engine drives the whole family: a first generation of warm-start
//! chromosomes (nearest-neighbor labels) padded with random ones, then per
//! generation elite duplication, uniform crossover, per-gene mutation, a
//! surrogate screening pass that keeps only the most promising offspring,
//! actual fitness evaluation of the survivors of screening, and truncation
//! selection to the next population. Plain GA is the reduction where the
//! screening budget equals the offspring count.

pub mod baselines;

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::NormalizedSeries;
use crate::error::{Error, Result};
use crate::knn::{nearest, DistanceNet};
use crate::learner::{FitnessSource, Schema, Strategy};
use crate::meta::{CharacteristicSet, MetaFeatureSpec};
use crate::rng;
use crate::screen::{screen, OffspringScreener};
use crate::store::MetaSample;

/// Genetic search settings. Defaults keep the screening budget far below
/// the offspring count (τ·M = 20 of W = 100).
#[derive(Debug, Clone)]
pub struct AgaConfig {
    /// Surviving population size M.
    pub population: usize,
    /// Offspring per generation W.
    pub offspring: usize,
    /// Generations N.
    pub generations: usize,
    /// Elite fraction p_rem.
    pub elite_fraction: f64,
    /// Per-gene mutation probability p_mut.
    pub mutation_prob: f64,
    /// Screening multiplier τ (> 1); τ·M offspring get actual evaluation.
    pub screen_multiplier: f64,
    pub elite_rule: EliteRule,
    pub seed: u64,
    /// Optional hard cap on actual fitness evaluations.
    pub max_actual_evals: Option<u64>,
}

/// The published description and its pseudocode count elites differently;
/// both are available, prose text is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EliteRule {
    /// ⌈p_rem · W⌉ elites, capped at the number of distinct parents.
    Text,
    /// ⌈p_rem · M⌉ elites.
    Pseudocode,
}

impl Default for AgaConfig {
    fn default() -> Self {
        AgaConfig {
            population: 10,
            offspring: 100,
            generations: 10,
            elite_fraction: 0.10,
            mutation_prob: 0.20,
            screen_multiplier: 2.0,
            elite_rule: EliteRule::Text,
            seed: 0,
            max_actual_evals: None,
        }
    }
}

impl AgaConfig {
    /// Offspring kept for actual evaluation each generation.
    pub fn screen_budget(&self) -> usize {
        ((self.screen_multiplier * self.population as f64).round() as usize)
            .min(self.offspring)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.offspring == 0 {
            return Err(Error::Config("population and offspring must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.elite_fraction)
            || !(0.0..=1.0).contains(&self.mutation_prob)
        {
            return Err(Error::Config("fractions must lie in [0,1]".into()));
        }
        if self.screen_multiplier * (self.population as f64) > self.offspring as f64 + 1e-9 {
            return Err(Error::Config(format!(
                "screening budget τ·M = {} exceeds offspring W = {}",
                self.screen_multiplier * self.population as f64,
                self.offspring
            )));
        }
        Ok(())
    }
}

/// One surviving generation: members with their actual fitness.
#[derive(Debug, Clone)]
pub struct Generation {
    pub index: usize,
    pub members: Vec<(Strategy, f64)>,
    pub evals_snapshot: u64,
}

/// Per-generation log record.
#[derive(Debug, Clone)]
pub struct GenerationLog {
    pub generation: usize,
    /// Best actual fitness seen so far (nondecreasing).
    pub best_fitness: f64,
    /// Mean actual fitness of the surviving population.
    pub mean_fitness: f64,
    pub actual_evals_cum: u64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub best: Strategy,
    pub best_fitness: f64,
    pub history: Vec<GenerationLog>,
    pub actual_evaluations: u64,
    pub wall_ms: u128,
}

impl OptimizationResult {
    /// Rows `generation, best_fitness, mean_fitness, actual_evals_cum, wall_ms`.
    pub fn log_rows(&self) -> Vec<String> {
        self.history
            .iter()
            .map(|g| {
                format!(
                    "{},{},{},{},{}",
                    g.generation, g.best_fitness, g.mean_fitness, g.actual_evals_cum, g.wall_ms
                )
            })
            .collect()
    }

    /// Log serialization without wall-clock columns; identical runs produce
    /// identical canonical logs regardless of thread count.
    pub fn canonical_log(&self, schema: &Schema) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "best={} fitness={} evals={}\n",
            schema.format_strategy(&self.best),
            self.best_fitness,
            self.actual_evaluations
        ));
        for g in &self.history {
            out.push_str(&format!(
                "{},{},{},{}\n",
                g.generation, g.best_fitness, g.mean_fitness, g.actual_evals_cum
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Offspring construction
// ---------------------------------------------------------------------------

/// Builds W offspring from the parent generation: top parents duplicated as
/// elites, the rest uniform-crossover hybrids with per-gene mutation drawn
/// from the gene's (compatibility-filtered) range.
pub fn make_offspring(
    parents: &[(Strategy, f64)],
    schema: &Schema,
    cfg: &AgaConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Strategy> {
    assert!(!parents.is_empty());
    let w = cfg.offspring;
    let elite_target = match cfg.elite_rule {
        EliteRule::Text => (cfg.elite_fraction * w as f64).ceil() as usize,
        EliteRule::Pseudocode => (cfg.elite_fraction * parents.len() as f64).ceil() as usize,
    };
    // Only as many distinct parents exist as the population holds.
    let elite_count = elite_target.min(parents.len()).min(w);

    let mut ranked: Vec<&(Strategy, f64)> = parents.iter().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                let ga = schema.grid_index(&a.0).unwrap_or(usize::MAX);
                let gb = schema.grid_index(&b.0).unwrap_or(usize::MAX);
                ga.cmp(&gb)
            })
    });

    let mut offspring = Vec::with_capacity(w);
    for e in ranked.iter().take(elite_count) {
        offspring.push(e.0.clone());
    }
    let genes = schema.gene_count();
    while offspring.len() < w {
        let a = &parents[rng.gen_range(0..parents.len())].0;
        let b = &parents[rng.gen_range(0..parents.len())].0;
        // Uniform crossover: each gene from either parent with equal odds.
        let mut child = Strategy(
            (0..genes)
                .map(|g| if rng.gen_bool(0.5) { a.0[g] } else { b.0[g] })
                .collect(),
        );
        child = repair(schema, child, rng);
        for g in 0..genes {
            if rng.gen_bool(cfg.mutation_prob) {
                child = schema.mutate_gene(&child, g, rng);
            }
        }
        offspring.push(child);
    }
    offspring
}

/// Makes a strategy grid-valid by redrawing jointly-constrained genes; falls
/// back to a uniform grid draw if no single-gene fix exists.
fn repair(schema: &Schema, candidate: Strategy, rng: &mut ChaCha8Rng) -> Strategy {
    if schema.contains(&candidate) {
        return candidate;
    }
    for g in 0..schema.gene_count() {
        let n_values = schema.genes()[g].values.len();
        let fixes: Vec<u16> = (0..n_values as u16)
            .filter(|&vi| {
                let mut c = candidate.clone();
                c.0[g] = vi;
                schema.contains(&c)
            })
            .collect();
        if !fixes.is_empty() {
            let mut fixed = candidate.clone();
            fixed.0[g] = fixes[rng.gen_range(0..fixes.len())];
            return fixed;
        }
    }
    schema.random_strategy(rng)
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct BestTracker {
    best: Option<(Strategy, f64, usize)>,
}

impl BestTracker {
    fn new() -> Self {
        BestTracker { best: None }
    }

    fn offer(&mut self, schema: &Schema, strategy: &Strategy, fitness: f64) {
        let grid = schema.grid_index(strategy).unwrap_or(usize::MAX);
        let better = match &self.best {
            None => true,
            Some((_, bf, bg)) => fitness > *bf || (fitness == *bf && grid < *bg),
        };
        if better {
            self.best = Some((strategy.clone(), fitness, grid));
        }
    }
}

/// Evaluates unique strategies in parallel, charging the budget only for
/// uncached ones. Returns per-strategy fitness aligned with the input, or
/// None for strategies dropped by the budget cap.
fn evaluate_with_budget(
    fitness: &dyn FitnessSource,
    strategies: &[Strategy],
    cfg: &AgaConfig,
) -> Vec<Option<f64>> {
    let mut unique: Vec<Strategy> = Vec::new();
    for s in strategies {
        if !unique.contains(s) {
            unique.push(s.clone());
        }
    }
    // Cached strategies are free; fresh ones respect the remaining budget
    // in input (ranking) order.
    let mut allowed: Vec<Strategy> = Vec::new();
    let mut budget_left = cfg
        .max_actual_evals
        .map(|cap| cap.saturating_sub(fitness.actual_evaluations()));
    for s in &unique {
        if fitness.cached_fitness(s).is_some() {
            allowed.push(s.clone());
        } else {
            match budget_left {
                Some(0) => {}
                Some(ref mut left) => {
                    *left -= 1;
                    allowed.push(s.clone());
                }
                None => allowed.push(s.clone()),
            }
        }
    }
    let scores: Vec<(Strategy, f64)> = allowed
        .par_iter()
        .map(|s| (s.clone(), fitness.fitness(s)))
        .collect();
    let lookup: std::collections::HashMap<&Strategy, f64> =
        scores.iter().map(|(s, f)| (s, *f)).collect();
    strategies.iter().map(|s| lookup.get(s).copied()).collect()
}

/// Runs the screened genetic search from the given warm-start chromosomes
/// (may be empty for a cold start). `query_features` feed the screener.
pub fn run_aga(
    warm_seeds: &[Strategy],
    fitness: &dyn FitnessSource,
    screener: &dyn OffspringScreener,
    query_features: &[f64],
    schema: &Schema,
    cfg: &AgaConfig,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    if warm_seeds.len() > cfg.population {
        return Err(Error::Config(format!(
            "{} warm-start chromosomes exceed population {}",
            warm_seeds.len(),
            cfg.population
        )));
    }
    for s in warm_seeds {
        if !schema.contains(s) {
            return Err(Error::Invalid("warm-start strategy not in grid".into()));
        }
    }
    let started = Instant::now();
    let mut tracker = BestTracker::new();
    let mut history = Vec::with_capacity(cfg.generations + 1);

    // First generation: warm seeds plus uniform random strategies, all
    // evaluated exactly — screening applies to offspring only.
    let mut init_rng = rng::stream(&[cfg.seed, 0]);
    let mut population: Vec<Strategy> = warm_seeds.to_vec();
    while population.len() < cfg.population {
        population.push(schema.random_strategy(&mut init_rng));
    }
    let init_scores = evaluate_with_budget(fitness, &population, cfg);
    let mut current: Vec<(Strategy, f64)> = population
        .iter()
        .zip(&init_scores)
        .filter_map(|(s, f)| f.map(|f| (s.clone(), f)))
        .collect();
    if current.is_empty() {
        return Err(Error::Config(
            "evaluation budget too small for the initial population".into(),
        ));
    }
    for (s, f) in &current {
        tracker.offer(schema, s, *f);
    }
    push_log(&mut history, 0, &tracker, &current, fitness, &started);

    for generation in 1..=cfg.generations {
        let mut gen_rng = rng::stream(&[cfg.seed, generation as u64]);
        let offspring = make_offspring(&current, schema, cfg, &mut gen_rng);
        let kept = screen(
            screener,
            query_features,
            &offspring,
            schema,
            cfg.screen_budget(),
        );
        let scores = evaluate_with_budget(fitness, &kept, cfg);
        let mut evaluated: Vec<(Strategy, f64)> = kept
            .iter()
            .zip(&scores)
            .filter_map(|(s, f)| f.map(|f| (s.clone(), f)))
            .collect();
        if evaluated.is_empty() {
            // Budget exhausted with nothing cached: stop searching.
            break;
        }
        for (s, f) in &evaluated {
            tracker.offer(schema, s, *f);
        }
        // Survivors: exact top-M by actual fitness among evaluated offspring.
        evaluated.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| {
                    let ga = schema.grid_index(&a.0).unwrap_or(usize::MAX);
                    let gb = schema.grid_index(&b.0).unwrap_or(usize::MAX);
                    ga.cmp(&gb)
                })
        });
        evaluated.truncate(cfg.population);
        current = evaluated;
        push_log(
            &mut history,
            generation,
            &tracker,
            &current,
            fitness,
            &started,
        );
    }

    let (best, best_fitness, _) = tracker.best.expect("population was evaluated");
    Ok(OptimizationResult {
        best,
        best_fitness,
        history,
        actual_evaluations: fitness.actual_evaluations(),
        wall_ms: started.elapsed().as_millis(),
    })
}

fn push_log(
    history: &mut Vec<GenerationLog>,
    generation: usize,
    tracker: &BestTracker,
    current: &[(Strategy, f64)],
    fitness: &dyn FitnessSource,
    started: &Instant,
) {
    let mean = current.iter().map(|(_, f)| f).sum::<f64>() / current.len() as f64;
    history.push(GenerationLog {
        generation,
        best_fitness: tracker.best.as_ref().map(|b| b.1).unwrap_or(f64::NAN),
        mean_fitness: mean,
        actual_evals_cum: fitness.actual_evaluations(),
        wall_ms: started.elapsed().as_millis(),
    });
}

// ---------------------------------------------------------------------------
// Full pipeline entry point
// ---------------------------------------------------------------------------

/// Everything the warm-started screened search needs from the offline phase.
pub struct MetaLearner<'a> {
    pub store: &'a [MetaSample],
    pub feature_spec: &'a MetaFeatureSpec,
    pub characteristics: &'a CharacteristicSet,
    pub distance: &'a DistanceNet,
    pub screener: &'a dyn OffspringScreener,
    pub neighbors: usize,
}

/// The end-to-end online procedure for a new task: compute its meta-feature
/// vector, retrieve the K nearest stored tasks, seed the first generation
/// with their labels, and run the screened genetic search.
pub fn run_algorithm1(
    series: &NormalizedSeries,
    fitness: &dyn FitnessSource,
    parts: &MetaLearner,
    schema: &Schema,
    cfg: &AgaConfig,
) -> Result<OptimizationResult> {
    if parts.neighbors > cfg.population {
        return Err(Error::Config(format!(
            "K = {} exceeds population M = {}",
            parts.neighbors, cfg.population
        )));
    }
    let features = parts
        .feature_spec
        .vector_for_series(series, parts.characteristics);
    let picked = nearest(parts.distance, parts.store, &features, parts.neighbors)?;
    let seeds: Vec<Strategy> = picked
        .iter()
        .map(|n| parts.store[n.store_index].label.clone())
        .collect();
    run_aga(&seeds, fitness, parts.screener, &features, schema, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::ModelKind;
    use crate::screen::{FnScreener, NullScreener};
    use dashmap::DashMap;
    use std::sync::atomic::{AtomicU64, Ordering};

    /// Match-count toy landscape: fitness = number of genes agreeing with a
    /// hidden target strategy.
    pub(crate) struct ToyLandscape {
        pub target: Strategy,
        cache: DashMap<Strategy, f64>,
        evals: AtomicU64,
    }

    impl ToyLandscape {
        pub fn new(target: Strategy) -> Self {
            ToyLandscape {
                target,
                cache: DashMap::new(),
                evals: AtomicU64::new(0),
            }
        }

        pub fn score(&self, s: &Strategy) -> f64 {
            s.0.iter()
                .zip(&self.target.0)
                .filter(|(a, b)| a == b)
                .count() as f64
        }
    }

    impl FitnessSource for ToyLandscape {
        fn fitness(&self, s: &Strategy) -> f64 {
            if let Some(f) = self.cache.get(s) {
                return *f;
            }
            self.evals.fetch_add(1, Ordering::Relaxed);
            let f = self.score(s);
            self.cache.insert(s.clone(), f);
            f
        }

        fn cached_fitness(&self, s: &Strategy) -> Option<f64> {
            self.cache.get(s).map(|f| *f)
        }

        fn actual_evaluations(&self) -> u64 {
            self.evals.load(Ordering::Relaxed)
        }
    }

    pub(crate) fn toy_schema() -> Schema {
        // 5 genes, 4 values each: 1024 strategies.
        Schema::new(
            ModelKind::Mlp,
            (0..5)
                .map(|g| {
                    crate::learner::GeneDef::linear(
                        &format!("g{g}"),
                        &[0.0, 1.0, 2.0, 3.0],
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn offspring_counts_follow_elite_arithmetic() {
        let schema = toy_schema();
        let cfg = AgaConfig {
            population: 10,
            offspring: 80,
            elite_fraction: 0.1,
            mutation_prob: 0.0,
            screen_multiplier: 2.0,
            ..AgaConfig::default()
        };
        let mut r = rng::stream(&[1]);
        let parents: Vec<(Strategy, f64)> = (0..10)
            .map(|i| (schema.strategy_at(i).clone(), i as f64))
            .collect();
        let kids = make_offspring(&parents, &schema, &cfg, &mut r);
        assert_eq!(kids.len(), 80);
        // ⌈0.1·80⌉ = 8 elites: the top-8 parents by fitness, duplicated.
        let best_parent = &parents[9].0;
        assert_eq!(&kids[0], best_parent);
        for (i, k) in kids.iter().take(8).enumerate() {
            assert_eq!(k, &parents[9 - i].0);
        }
    }

    #[test]
    fn zero_mutation_identical_parents_clone_perfectly() {
        let schema = toy_schema();
        let cfg = AgaConfig {
            population: 4,
            offspring: 20,
            mutation_prob: 0.0,
            screen_multiplier: 2.0,
            ..AgaConfig::default()
        };
        let one = schema.strategy_at(37).clone();
        let parents = vec![(one.clone(), 1.0); 4];
        let mut r = rng::stream(&[2]);
        let kids = make_offspring(&parents, &schema, &cfg, &mut r);
        assert!(kids.iter().all(|k| k == &one));
    }

    #[test]
    fn full_mutation_yields_uniform_gene_marginals() {
        // p_mut = 1: every hybrid gene is a uniform redraw. χ² over 10⁴
        // draws per gene, df = 3, far below the p=0.001 critical value.
        let schema = toy_schema();
        let cfg = AgaConfig {
            population: 2,
            offspring: 2500,
            elite_fraction: 0.0,
            mutation_prob: 1.0,
            screen_multiplier: 1.0,
            ..AgaConfig::default()
        };
        let parents = vec![
            (schema.strategy_at(0).clone(), 1.0),
            (schema.strategy_at(1).clone(), 1.0),
        ];
        let mut counts = vec![[0usize; 4]; 5];
        for round in 0..4 {
            let mut r = rng::stream(&[round]);
            for k in make_offspring(&parents, &schema, &cfg, &mut r) {
                for g in 0..5 {
                    counts[g][k.gene(g)] += 1;
                }
            }
        }
        let n = 10_000.0;
        for gene_counts in &counts {
            let expected = n / 4.0;
            let chi2: f64 = gene_counts
                .iter()
                .map(|&c| {
                    let d = c as f64 - expected;
                    d * d / expected
                })
                .sum();
            assert!(chi2 < 16.27, "χ² = {chi2} too large for uniformity");
        }
    }

    #[test]
    fn toy_landscape_converges_with_oracle_screener() {
        let schema = toy_schema();
        let target = schema.strategy_at(777).clone();
        let mut hits = 0;
        for seed in 0..10u64 {
            let land = ToyLandscape::new(target.clone());
            // Oracle double scores by true match count against the target.
            let target_clone = target.clone();
            let oracle = FnScreener(move |s: &Strategy| {
                s.0.iter()
                    .zip(&target_clone.0)
                    .filter(|(a, b)| a == b)
                    .count() as f64
            });
            let cfg = AgaConfig {
                seed,
                ..AgaConfig::default()
            };
            let out = run_aga(&[], &land, &oracle, &[], &schema, &cfg).unwrap();
            assert!(
                out.actual_evaluations <= 210,
                "evals {} exceed τ·M·N + M",
                out.actual_evaluations
            );
            if out.best == target {
                hits += 1;
            }
        }
        assert!(hits >= 9, "only {hits}/10 seeds reached the optimum");
    }

    #[test]
    fn per_generation_actual_evals_respect_screen_budget() {
        let schema = toy_schema();
        let land = ToyLandscape::new(schema.strategy_at(100).clone());
        let cfg = AgaConfig::default();
        let out = run_aga(&[], &land, &NullScreener, &[], &schema, &cfg).unwrap();
        let budget = cfg.screen_budget() as u64;
        for w in out.history.windows(2) {
            let delta = w[1].actual_evals_cum - w[0].actual_evals_cum;
            assert!(delta <= budget, "generation used {delta} > τ·M = {budget}");
        }
        assert_eq!(out.history[0].actual_evals_cum, cfg.population as u64);
    }

    #[test]
    fn best_so_far_is_nondecreasing_and_results_reproducible() {
        let schema = toy_schema();
        let target = schema.strategy_at(512).clone();
        let cfg = AgaConfig {
            seed: 5,
            ..AgaConfig::default()
        };
        let run = |threads: usize| {
            let land = ToyLandscape::new(target.clone());
            let t = target.clone();
            let oracle = FnScreener(move |s: &Strategy| {
                s.0.iter().zip(&t.0).filter(|(a, b)| a == b).count() as f64
            });
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| run_aga(&[], &land, &oracle, &[], &schema, &cfg).unwrap())
        };
        let a = run(1);
        for w in a.history.windows(2) {
            assert!(w[1].best_fitness >= w[0].best_fitness);
        }
        let b = run(4);
        assert_eq!(a.canonical_log(&schema), b.canonical_log(&schema));
    }

    #[test]
    fn reduction_case_equals_unscreened_search() {
        // With W = τ·M screening is a no-op: any screener yields the same
        // trajectory as the null screener under a shared seed.
        let schema = toy_schema();
        let target = schema.strategy_at(300).clone();
        let cfg = AgaConfig {
            population: 6,
            offspring: 12,
            screen_multiplier: 2.0,
            generations: 6,
            seed: 9,
            ..AgaConfig::default()
        };
        let t = target.clone();
        let oracle = FnScreener(move |s: &Strategy| {
            s.0.iter().zip(&t.0).filter(|(a, b)| a == b).count() as f64
        });
        let land_a = ToyLandscape::new(target.clone());
        let a = run_aga(&[], &land_a, &oracle, &[], &schema, &cfg).unwrap();
        let land_b = ToyLandscape::new(target.clone());
        let b = run_aga(&[], &land_b, &NullScreener, &[], &schema, &cfg).unwrap();
        assert_eq!(a.canonical_log(&schema), b.canonical_log(&schema));
    }

    #[test]
    fn warm_seeds_exceeding_population_is_a_config_error() {
        let schema = toy_schema();
        let land = ToyLandscape::new(schema.strategy_at(0).clone());
        let seeds: Vec<Strategy> = schema.grid()[..5].to_vec();
        let cfg = AgaConfig {
            population: 3,
            offspring: 6,
            ..AgaConfig::default()
        };
        assert!(run_aga(&seeds, &land, &NullScreener, &[], &schema, &cfg).is_err());
    }

    #[test]
    fn budget_cap_is_respected_exactly() {
        let schema = toy_schema();
        let land = ToyLandscape::new(schema.strategy_at(42).clone());
        let cfg = AgaConfig {
            max_actual_evals: Some(25),
            ..AgaConfig::default()
        };
        let out = run_aga(&[], &land, &NullScreener, &[], &schema, &cfg).unwrap();
        assert!(out.actual_evaluations <= 25);
    }

    #[test]
    fn emitted_strategies_are_always_grid_valid() {
        let schema = Schema::adnn_full();
        let cfg = AgaConfig {
            population: 8,
            offspring: 40,
            mutation_prob: 0.5,
            screen_multiplier: 2.0,
            ..AgaConfig::default()
        };
        let mut r = rng::stream(&[33]);
        let parents: Vec<(Strategy, f64)> = (0..8)
            .map(|i| (schema.strategy_at(i * 50).clone(), i as f64))
            .collect();
        for round in 0..20u64 {
            let mut rr = rng::stream(&[round, 1]);
            let kids = make_offspring(&parents, &schema, &cfg, &mut rr);
            for k in kids {
                assert!(schema.contains(&k), "invalid strategy emitted");
            }
        }
        let _ = &mut r;
    }
}
