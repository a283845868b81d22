//! Budget-matched baseline optimizers over the same strategy grid: grid
//! search, stochastic search, plain / warm-started / screened genetic
//! variants, particle swarm, and Gaussian-process Bayesian optimization.
//! All share one evaluation counter through [`FitnessSource`].

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{run_aga, AgaConfig, GenerationLog, OptimizationResult};
use crate::error::{Error, Result};
use crate::learner::{FitnessSource, Schema, Strategy};
use crate::rng;
use crate::screen::{NullScreener, OffspringScreener};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Exhaustive grid search (ignores the budget).
    Gs,
    /// Uniform sampling without replacement under the budget.
    Ss,
    /// Plain genetic search: random init, every offspring evaluated.
    Ga,
    /// Screened genetic search with random init.
    Aga,
    /// Warm-started genetic search without screening.
    GaKnn,
    /// Particle swarm on the encoded [0,1] gene space, rounded to the grid.
    Pso,
    /// Gaussian-process surrogate with expected improvement.
    Bo,
}

impl BaselineKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "gs" => BaselineKind::Gs,
            "ss" => BaselineKind::Ss,
            "ga" => BaselineKind::Ga,
            "aga" => BaselineKind::Aga,
            "ga_knn" => BaselineKind::GaKnn,
            "pso" => BaselineKind::Pso,
            "bo" => BaselineKind::Bo,
            other => return Err(Error::Config(format!("unknown method '{other}'"))),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Gs => "gs",
            BaselineKind::Ss => "ss",
            BaselineKind::Ga => "ga",
            BaselineKind::Aga => "aga",
            BaselineKind::GaKnn => "ga_knn",
            BaselineKind::Pso => "pso",
            BaselineKind::Bo => "bo",
        }
    }
}

/// Shared inputs for one baseline run on one task.
pub struct BaselineContext<'a> {
    pub fitness: &'a dyn FitnessSource,
    pub schema: &'a Schema,
    /// Maximum actual fitness evaluations (GS sweeps the grid regardless).
    pub budget: u64,
    pub seed: u64,
    /// Genetic-family settings (population, offspring, fraction knobs).
    pub ga: AgaConfig,
    /// Warm-start chromosomes for the KNN-seeded variants.
    pub warm_seeds: Vec<Strategy>,
    /// Screener for the screened variants.
    pub screener: Option<&'a dyn OffspringScreener>,
    /// Meta-feature vector of the task (screener input).
    pub query_features: Vec<f64>,
}

pub fn run_baseline(kind: BaselineKind, ctx: &BaselineContext) -> Result<OptimizationResult> {
    match kind {
        BaselineKind::Gs => run_gs(ctx),
        BaselineKind::Ss => run_ss(ctx),
        BaselineKind::Ga => run_ga_family(ctx, false, false),
        BaselineKind::GaKnn => run_ga_family(ctx, true, false),
        BaselineKind::Aga => run_ga_family(ctx, false, true),
        BaselineKind::Pso => run_pso(ctx),
        BaselineKind::Bo => run_bo(ctx),
    }
}

fn single_log(fitness: &dyn FitnessSource, best: f64, started: &Instant) -> Vec<GenerationLog> {
    vec![GenerationLog {
        generation: 0,
        best_fitness: best,
        mean_fitness: best,
        actual_evals_cum: fitness.actual_evaluations(),
        wall_ms: started.elapsed().as_millis(),
    }]
}

fn best_of(
    schema: &Schema,
    scored: impl Iterator<Item = (Strategy, f64)>,
) -> Option<(Strategy, f64)> {
    let mut best: Option<(Strategy, f64, usize)> = None;
    for (s, f) in scored {
        let g = schema.grid_index(&s).unwrap_or(usize::MAX);
        let better = match &best {
            None => true,
            Some((_, bf, bg)) => f > *bf || (f == *bf && g < *bg),
        };
        if better {
            best = Some((s, f, g));
        }
    }
    best.map(|(s, f, _)| (s, f))
}

fn run_gs(ctx: &BaselineContext) -> Result<OptimizationResult> {
    let started = Instant::now();
    let schema = ctx.schema;
    let scores: Vec<f64> = (0..schema.grid_len())
        .into_par_iter()
        .map(|gi| ctx.fitness.fitness(schema.strategy_at(gi)))
        .collect();
    let (best, best_fitness) = best_of(
        schema,
        scores
            .iter()
            .enumerate()
            .map(|(gi, &f)| (schema.strategy_at(gi).clone(), f)),
    )
    .ok_or_else(|| Error::Invalid("empty grid".into()))?;
    Ok(OptimizationResult {
        best,
        best_fitness,
        history: single_log(ctx.fitness, best_fitness, &started),
        actual_evaluations: ctx.fitness.actual_evaluations(),
        wall_ms: started.elapsed().as_millis(),
    })
}

fn run_ss(ctx: &BaselineContext) -> Result<OptimizationResult> {
    let started = Instant::now();
    let schema = ctx.schema;
    let mut order: Vec<usize> = (0..schema.grid_len()).collect();
    let mut r = rng::stream(&[ctx.seed, 0x55]);
    order.shuffle(&mut r);
    order.truncate((ctx.budget as usize).min(schema.grid_len()).max(1));
    let scores: Vec<f64> = order
        .par_iter()
        .map(|&gi| ctx.fitness.fitness(schema.strategy_at(gi)))
        .collect();
    let (best, best_fitness) = best_of(
        schema,
        order
            .iter()
            .zip(&scores)
            .map(|(&gi, &f)| (schema.strategy_at(gi).clone(), f)),
    )
    .ok_or_else(|| Error::Invalid("empty sample".into()))?;
    Ok(OptimizationResult {
        best,
        best_fitness,
        history: single_log(ctx.fitness, best_fitness, &started),
        actual_evaluations: ctx.fitness.actual_evaluations(),
        wall_ms: started.elapsed().as_millis(),
    })
}

/// GA, GA+KNN and AGA share the engine: without screening the per-generation
/// evaluation budget is the full offspring count (τ·M = W).
fn run_ga_family(
    ctx: &BaselineContext,
    warm_start: bool,
    screened: bool,
) -> Result<OptimizationResult> {
    let mut cfg = ctx.ga.clone();
    cfg.seed = ctx.seed;
    cfg.max_actual_evals = Some(ctx.budget);
    if !screened {
        cfg.screen_multiplier = cfg.offspring as f64 / cfg.population as f64;
    }
    let seeds: &[Strategy] = if warm_start { &ctx.warm_seeds } else { &[] };
    let null = NullScreener;
    let screener: &dyn OffspringScreener = if screened {
        ctx.screener
            .ok_or_else(|| Error::Missing("screened run needs a trained screener".into()))?
    } else {
        &null
    };
    run_aga(
        seeds,
        ctx.fitness,
        screener,
        &ctx.query_features,
        ctx.schema,
        &cfg,
    )
}

// ---------------------------------------------------------------------------
// Particle swarm
// ---------------------------------------------------------------------------

const PSO_INERTIA: f64 = 0.72;
const PSO_COGNITIVE: f64 = 1.49;
const PSO_SOCIAL: f64 = 1.49;

/// Nearest grid strategy to a continuous encoded position: per gene the
/// closest encoded value, then a compatibility repair toward the nearest
/// valid combination.
fn round_to_grid(schema: &Schema, position: &[f64]) -> Strategy {
    let mut idx = Vec::with_capacity(schema.gene_count());
    for (g, gene) in schema.genes().iter().enumerate() {
        let candidates = encoded_values(schema, g);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (vi, &ev) in candidates.iter().enumerate() {
            let d = (ev - position[g]).abs();
            if d < best_d {
                best_d = d;
                best = vi;
            }
        }
        idx.push(best as u16);
        let _ = gene;
    }
    let candidate = Strategy(idx);
    if schema.contains(&candidate) {
        return candidate;
    }
    // Walk genes and snap each to the nearest compatible value.
    let mut fixed = candidate.clone();
    for g in 0..schema.gene_count() {
        let candidates = encoded_values(schema, g);
        let mut options: Vec<(f64, u16)> = (0..candidates.len() as u16)
            .filter(|&vi| {
                let mut c = fixed.clone();
                c.0[g] = vi;
                schema.contains(&c)
            })
            .map(|vi| ((candidates[vi as usize] - position[g]).abs(), vi))
            .collect();
        if options.is_empty() {
            continue;
        }
        options.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        fixed.0[g] = options[0].1;
        if schema.contains(&fixed) {
            return fixed;
        }
    }
    // Last resort: first grid strategy (never reached for sane schemas).
    schema.strategy_at(0).clone()
}

fn encoded_values(schema: &Schema, gene: usize) -> Vec<f64> {
    (0..schema.genes()[gene].values.len())
        .map(|vi| {
            let mut s = Strategy(vec![0; schema.gene_count()]);
            s.0[gene] = vi as u16;
            crate::screen::encode_strategy(schema, &s)[gene]
        })
        .collect()
}

fn run_pso(ctx: &BaselineContext) -> Result<OptimizationResult> {
    let started = Instant::now();
    let schema = ctx.schema;
    let dims = schema.gene_count();
    let swarm = ctx.ga.population.max(2);
    let mut r = rng::stream(&[ctx.seed, 0x9507]);

    let mut positions: Vec<Vec<f64>> = (0..swarm)
        .map(|_| (0..dims).map(|_| r.gen::<f64>()).collect())
        .collect();
    let mut velocities: Vec<Vec<f64>> = (0..swarm)
        .map(|_| (0..dims).map(|_| r.gen_range(-0.25..0.25)).collect())
        .collect();

    let mut personal_best = positions.clone();
    let mut personal_fitness = vec![f64::NEG_INFINITY; swarm];
    let mut global_best_pos = positions[0].clone();
    let mut global_best: Option<(Strategy, f64)> = None;
    let mut history = Vec::new();

    let mut used = 0u64;
    let mut generation = 0usize;
    while used < ctx.budget {
        let batch: Vec<Strategy> = positions.iter().map(|p| round_to_grid(schema, p)).collect();
        // Evaluate this iteration's particles (deduplicated, budget-capped).
        let mut unique: Vec<Strategy> = Vec::new();
        for s in &batch {
            if !unique.contains(s) && ctx.fitness.cached_fitness(s).is_none() {
                unique.push(s.clone());
            }
        }
        let room = (ctx.budget - used) as usize;
        unique.truncate(room);
        let _: Vec<f64> = unique.par_iter().map(|s| ctx.fitness.fitness(s)).collect();
        used = ctx.fitness.actual_evaluations();

        let mut gen_best = f64::NEG_INFINITY;
        let mut gen_sum = 0.0;
        let mut counted = 0usize;
        for (i, s) in batch.iter().enumerate() {
            let Some(f) = ctx.fitness.cached_fitness(s) else {
                continue;
            };
            gen_sum += f;
            counted += 1;
            gen_best = gen_best.max(f);
            if f > personal_fitness[i] {
                personal_fitness[i] = f;
                personal_best[i] = positions[i].clone();
            }
            let g = schema.grid_index(s).unwrap_or(usize::MAX);
            let better = match &global_best {
                None => true,
                Some((bs, bf)) => {
                    f > *bf
                        || (f == *bf && g < schema.grid_index(bs).unwrap_or(usize::MAX))
                }
            };
            if better {
                global_best = Some((s.clone(), f));
                global_best_pos = positions[i].clone();
            }
        }
        if counted > 0 {
            history.push(GenerationLog {
                generation,
                best_fitness: global_best.as_ref().map(|b| b.1).unwrap_or(f64::NAN),
                mean_fitness: gen_sum / counted as f64,
                actual_evals_cum: used,
                wall_ms: started.elapsed().as_millis(),
            });
        }
        generation += 1;

        for i in 0..swarm {
            for d in 0..dims {
                let r1: f64 = r.gen();
                let r2: f64 = r.gen();
                velocities[i][d] = PSO_INERTIA * velocities[i][d]
                    + PSO_COGNITIVE * r1 * (personal_best[i][d] - positions[i][d])
                    + PSO_SOCIAL * r2 * (global_best_pos[d] - positions[i][d]);
                positions[i][d] = (positions[i][d] + velocities[i][d]).clamp(0.0, 1.0);
            }
        }
    }

    let (best, best_fitness) =
        global_best.ok_or_else(|| Error::Config("PSO budget allowed no evaluations".into()))?;
    Ok(OptimizationResult {
        best,
        best_fitness,
        history,
        actual_evaluations: ctx.fitness.actual_evaluations(),
        wall_ms: started.elapsed().as_millis(),
    })
}

// ---------------------------------------------------------------------------
// Bayesian optimization
// ---------------------------------------------------------------------------

const BO_LENGTHSCALE: f64 = 0.5;
const BO_NOISE: f64 = 1e-6;
const BO_STARTUP: usize = 5;

fn sq_exp_kernel(a: &[f64], b: &[f64], amplitude: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    amplitude * (-d2 / (2.0 * BO_LENGTHSCALE * BO_LENGTHSCALE)).exp()
}

/// In-place Cholesky factorization (lower triangular) with jitter.
fn cholesky(mut k: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let n = k.len();
    for i in 0..n {
        k[i][i] += BO_NOISE;
    }
    for i in 0..n {
        for j in 0..=i {
            let mut sum = k[i][j];
            for p in 0..j {
                sum -= k[i][p] * k[j][p];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Invalid("kernel matrix not positive definite".into()));
                }
                k[i][i] = sum.sqrt();
            } else {
                k[i][j] = sum / k[j][j];
            }
        }
        for j in i + 1..n {
            k[i][j] = 0.0;
        }
    }
    Ok(k)
}

fn solve_lower(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for j in 0..i {
            sum -= l[i][j] * x[j];
        }
        x[i] = sum / l[i][i];
    }
    x
}

fn solve_upper_t(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = b[i];
        for j in i + 1..n {
            sum -= l[j][i] * x[j];
        }
        x[i] = sum / l[i][i];
    }
    x
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Abramowitz–Stegun 7.1.26 polynomial approximation, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

fn run_bo(ctx: &BaselineContext) -> Result<OptimizationResult> {
    let started = Instant::now();
    let schema = ctx.schema;
    let grid_encoded: Vec<Vec<f64>> = (0..schema.grid_len())
        .map(|gi| crate::screen::encode_strategy(schema, schema.strategy_at(gi)))
        .collect();
    let budget = (ctx.budget as usize).min(schema.grid_len()).max(1);

    let mut r = rng::stream(&[ctx.seed, 0xb0]);
    let mut picked: Vec<usize> = Vec::new();
    let mut observed: Vec<f64> = Vec::new();
    let mut history = Vec::new();

    // Startup design: distinct uniform grid points.
    let mut order: Vec<usize> = (0..schema.grid_len()).collect();
    order.shuffle(&mut r);
    for &gi in order.iter().take(BO_STARTUP.min(budget)) {
        picked.push(gi);
        observed.push(ctx.fitness.fitness(schema.strategy_at(gi)));
    }

    while picked.len() < budget {
        // Standardize observations for a unit-scale GP.
        let n = observed.len() as f64;
        let mean = observed.iter().sum::<f64>() / n;
        let var = observed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-12);
        let y: Vec<f64> = observed.iter().map(|v| (v - mean) / std).collect();
        let amplitude = 1.0;

        let k: Vec<Vec<f64>> = picked
            .iter()
            .map(|&i| {
                picked
                    .iter()
                    .map(|&j| sq_exp_kernel(&grid_encoded[i], &grid_encoded[j], amplitude))
                    .collect()
            })
            .collect();
        let l = cholesky(k)?;
        let alpha = solve_upper_t(&l, &solve_lower(&l, &y));
        let best_y = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        // Expected improvement over every unevaluated grid point.
        let mut best_ei = f64::NEG_INFINITY;
        let mut best_gi = None;
        for gi in 0..schema.grid_len() {
            if picked.contains(&gi) {
                continue;
            }
            let kx: Vec<f64> = picked
                .iter()
                .map(|&j| sq_exp_kernel(&grid_encoded[gi], &grid_encoded[j], amplitude))
                .collect();
            let mu: f64 = kx.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            let v = solve_lower(&l, &kx);
            let var = (amplitude - v.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
            let sigma = var.sqrt();
            let z = (mu - best_y) / sigma;
            let ei = (mu - best_y) * normal_cdf(z) + sigma * normal_pdf(z);
            if ei > best_ei {
                best_ei = ei;
                best_gi = Some(gi);
            }
        }
        let Some(gi) = best_gi else { break };
        picked.push(gi);
        observed.push(ctx.fitness.fitness(schema.strategy_at(gi)));
        let best_now = observed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        history.push(GenerationLog {
            generation: picked.len(),
            best_fitness: best_now,
            mean_fitness: observed.iter().sum::<f64>() / observed.len() as f64,
            actual_evals_cum: ctx.fitness.actual_evaluations(),
            wall_ms: started.elapsed().as_millis(),
        });
    }

    let (best, best_fitness) = best_of(
        schema,
        picked
            .iter()
            .zip(&observed)
            .map(|(&gi, &f)| (schema.strategy_at(gi).clone(), f)),
    )
    .ok_or_else(|| Error::Config("BO budget allowed no evaluations".into()))?;
    Ok(OptimizationResult {
        best,
        best_fitness,
        history,
        actual_evaluations: ctx.fitness.actual_evaluations(),
        wall_ms: started.elapsed().as_millis(),
    })
}
