//! Per-task forecasting models and their hyper-parameter schemas.
//!
//! A [`Schema`] declares the discrete selection range of every gene for one
//! model kind and materializes the full strategy grid (incompatible
//! head-count/width pairs are excluded up front). A [`Strategy`] is one value
//! per gene, stored as indices into the gene's range. [`FitnessEvaluator`]
//! trains the corresponding model and scores a strategy as the reciprocal of
//! its validation MSE, memoizing results and counting actual training runs.

pub mod adnn;
pub mod mlp;
pub mod recurrent;
pub mod train;

pub use train::{train, Learner, TrainConfig};

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use dashmap::DashMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{NormalizedSeries, PredictionSample, SampleSplit, SplitConfig};
use crate::error::{Error, Result};
use crate::rng;

/// Floor applied to a validation MSE before taking its reciprocal, so a
/// perfect fit yields a large finite fitness.
pub const MSE_FLOOR: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Model kinds and schemas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Adnn,
    Mlp,
    Gru,
    Lstm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Adnn => "adnn",
            ModelKind::Mlp => "mlp",
            ModelKind::Gru => "gru",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adnn" => Ok(ModelKind::Adnn),
            "mlp" => Ok(ModelKind::Mlp),
            "gru" => Ok(ModelKind::Gru),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

/// How a gene's values map onto the unit interval when encoded for the
/// screening and distance networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneScale {
    Linear,
    /// log10 first — used for the learning rate, whose grid spans decades.
    Log10,
}

#[derive(Debug, Clone)]
pub struct GeneDef {
    pub name: String,
    pub values: Vec<f64>,
    pub scale: GeneScale,
}

impl GeneDef {
    pub fn linear(name: &str, values: &[f64]) -> Self {
        GeneDef {
            name: name.into(),
            values: values.to_vec(),
            scale: GeneScale::Linear,
        }
    }

    pub fn log10(name: &str, values: &[f64]) -> Self {
        GeneDef {
            name: name.into(),
            values: values.to_vec(),
            scale: GeneScale::Log10,
        }
    }
}

/// One chromosome: a chosen value index per gene, in schema gene order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Strategy(pub Vec<u16>);

impl Strategy {
    pub fn gene(&self, i: usize) -> usize {
        self.0[i] as usize
    }
}

/// Discrete hyper-parameter selection ranges for one model kind, with the
/// compatibility-filtered strategy grid materialized in canonical
/// (gene-major) order.
#[derive(Debug, Clone)]
pub struct Schema {
    kind: ModelKind,
    genes: Vec<GeneDef>,
    grid: Vec<Strategy>,
    index: HashMap<Strategy, usize>,
}

impl Schema {
    pub fn new(kind: ModelKind, genes: Vec<GeneDef>) -> Result<Self> {
        if genes.is_empty() {
            return Err(Error::Config("schema needs at least one gene".into()));
        }
        for g in &genes {
            if g.values.is_empty() {
                return Err(Error::Config(format!("gene '{}' has no values", g.name)));
            }
            if g.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("gene '{}' has non-finite values", g.name)));
            }
        }
        let mut grid = Vec::new();
        let mut cursor = vec![0u16; genes.len()];
        'outer: loop {
            let s = Strategy(cursor.clone());
            if kind_compatible(kind, &genes, &s) {
                grid.push(s);
            }
            // Advance gene-major: last gene fastest.
            for gi in (0..genes.len()).rev() {
                cursor[gi] += 1;
                if (cursor[gi] as usize) < genes[gi].values.len() {
                    continue 'outer;
                }
                cursor[gi] = 0;
            }
            break;
        }
        if grid.is_empty() {
            return Err(Error::Config("schema grid is empty after filtering".into()));
        }
        let index = grid
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Schema {
            kind,
            genes,
            grid,
            index,
        })
    }

    /// Full selection ranges for the attention model.
    pub fn adnn_full() -> Schema {
        Schema::new(
            ModelKind::Adnn,
            vec![
                GeneDef::linear("n_s", &[6.0, 12.0, 18.0]),
                GeneDef::log10("c", &[0.01, 0.001, 0.0001]),
                GeneDef::linear("l_e", &[1.0, 2.0, 3.0]),
                GeneDef::linear("h_e", &[2.0, 4.0, 6.0, 8.0]),
                GeneDef::linear("d_model", &[8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0]),
            ],
        )
        .expect("static schema")
    }

    pub fn gru_full() -> Schema {
        Schema::new(
            ModelKind::Gru,
            vec![
                GeneDef::linear("n_s", &[6.0, 12.0, 18.0]),
                GeneDef::log10("c", &[0.01, 0.001, 0.0001]),
                GeneDef::linear("layers", &[2.0, 3.0, 4.0]),
                GeneDef::linear("neure", &[256.0, 512.0, 768.0]),
            ],
        )
        .expect("static schema")
    }

    pub fn lstm_full() -> Schema {
        Schema::new(
            ModelKind::Lstm,
            vec![
                GeneDef::linear("n_s", &[6.0, 12.0, 18.0]),
                GeneDef::log10("c", &[0.01, 0.001, 0.0001]),
                GeneDef::linear("layers", &[2.0, 3.0, 4.0]),
                GeneDef::linear("neure", &[32.0, 64.0, 128.0, 256.0]),
            ],
        )
        .expect("static schema")
    }

    pub fn mlp_full() -> Schema {
        Schema::new(
            ModelKind::Mlp,
            vec![
                GeneDef::linear("n_s", &[6.0, 12.0, 18.0]),
                GeneDef::log10("c", &[0.01, 0.001, 0.0001]),
                GeneDef::linear("layers", &[2.0, 3.0, 4.0]),
                GeneDef::linear("neure", &[128.0, 256.0, 512.0]),
            ],
        )
        .expect("static schema")
    }

    /// Shrunken 36-strategy MLP grid for fast desk-scale experiments.
    pub fn mlp_desk() -> Schema {
        Schema::new(
            ModelKind::Mlp,
            vec![
                GeneDef::linear("n_s", &[6.0, 12.0, 18.0]),
                GeneDef::log10("c", &[0.01, 0.001]),
                GeneDef::linear("layers", &[1.0, 2.0]),
                GeneDef::linear("neure", &[4.0, 8.0, 16.0]),
            ],
        )
        .expect("static schema")
    }

    /// Tiny attention-model grid for tests.
    pub fn adnn_desk() -> Schema {
        Schema::new(
            ModelKind::Adnn,
            vec![
                GeneDef::linear("n_s", &[6.0, 12.0]),
                GeneDef::log10("c", &[0.01, 0.001]),
                GeneDef::linear("l_e", &[1.0]),
                GeneDef::linear("h_e", &[2.0]),
                GeneDef::linear("d_model", &[8.0, 16.0]),
            ],
        )
        .expect("static schema")
    }

    pub fn by_preset(name: &str) -> Result<Schema> {
        match name {
            "adnn_full" => Ok(Schema::adnn_full()),
            "gru_full" => Ok(Schema::gru_full()),
            "lstm_full" => Ok(Schema::lstm_full()),
            "mlp_full" => Ok(Schema::mlp_full()),
            "mlp_desk" => Ok(Schema::mlp_desk()),
            "adnn_desk" => Ok(Schema::adnn_desk()),
            other => Err(Error::Config(format!("unknown schema preset '{other}'"))),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn genes(&self) -> &[GeneDef] {
        &self.genes
    }

    pub fn gene_count(&self) -> usize {
        self.genes.len()
    }

    /// Number of valid strategies in the grid.
    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[Strategy] {
        &self.grid
    }

    pub fn strategy_at(&self, grid_index: usize) -> &Strategy {
        &self.grid[grid_index]
    }

    /// Position of a strategy in the canonical grid enumeration.
    pub fn grid_index(&self, s: &Strategy) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn contains(&self, s: &Strategy) -> bool {
        self.index.contains_key(s)
    }

    /// Concrete gene values of a strategy, in gene order.
    pub fn values(&self, s: &Strategy) -> Vec<f64> {
        self.genes
            .iter()
            .zip(&s.0)
            .map(|(g, &i)| g.values[i as usize])
            .collect()
    }

    pub fn value_of(&self, s: &Strategy, gene_name: &str) -> Result<f64> {
        let gi = self
            .genes
            .iter()
            .position(|g| g.name == gene_name)
            .ok_or_else(|| Error::Config(format!("schema has no gene '{gene_name}'")))?;
        Ok(self.genes[gi].values[s.gene(gi)])
    }

    /// Strategy from concrete values (exact match per gene).
    pub fn strategy_from_values(&self, values: &[f64]) -> Result<Strategy> {
        if values.len() != self.genes.len() {
            return Err(Error::Invalid(format!(
                "expected {} gene values, got {}",
                self.genes.len(),
                values.len()
            )));
        }
        let mut idx = Vec::with_capacity(values.len());
        for (g, &v) in self.genes.iter().zip(values) {
            let i = g
                .values
                .iter()
                .position(|&gv| gv == v)
                .ok_or_else(|| {
                    Error::Invalid(format!("value {v} not in gene '{}' range", g.name))
                })?;
            idx.push(i as u16);
        }
        let s = Strategy(idx);
        if !self.contains(&s) {
            return Err(Error::Invalid(
                "value combination is not grid-compatible".into(),
            ));
        }
        Ok(s)
    }

    /// Uniform draw over the valid grid.
    pub fn random_strategy(&self, rng: &mut ChaCha8Rng) -> Strategy {
        self.grid[rng.gen_range(0..self.grid.len())].clone()
    }

    /// Mutates gene `gi` of `s` to a uniformly drawn value that keeps the
    /// strategy grid-compatible.
    pub fn mutate_gene(&self, s: &Strategy, gi: usize, rng: &mut ChaCha8Rng) -> Strategy {
        let n_values = self.genes[gi].values.len();
        let compatible: Vec<u16> = (0..n_values as u16)
            .filter(|&vi| {
                let mut cand = s.clone();
                cand.0[gi] = vi;
                self.contains(&cand)
            })
            .collect();
        let mut out = s.clone();
        out.0[gi] = compatible[rng.gen_range(0..compatible.len())];
        out
    }

    /// Display form `v1|v2|...` of a strategy's values.
    pub fn format_strategy(&self, s: &Strategy) -> String {
        self.values(s)
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Stable 64-bit FNV-1a hash of the schema definition; a grid change
    /// invalidates any store built against the old hash.
    pub fn schema_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100_0000_01b3);
            }
        };
        eat(self.kind.as_str().as_bytes());
        for g in &self.genes {
            eat(g.name.as_bytes());
            for v in &g.values {
                eat(v.to_string().as_bytes());
            }
            eat(match g.scale {
                GeneScale::Linear => b"lin",
                GeneScale::Log10 => b"log10",
            });
        }
        h
    }
}

/// Joint gene constraints per model kind. The attention model requires the
/// head count to divide the model width.
fn kind_compatible(kind: ModelKind, genes: &[GeneDef], s: &Strategy) -> bool {
    if kind != ModelKind::Adnn {
        return true;
    }
    let mut h_e = None;
    let mut d_model = None;
    for (g, &i) in genes.iter().zip(&s.0) {
        match g.name.as_str() {
            "h_e" => h_e = Some(g.values[i as usize] as usize),
            "d_model" => d_model = Some(g.values[i as usize] as usize),
            _ => {}
        }
    }
    match (h_e, d_model) {
        (Some(h), Some(d)) => h > 0 && d % h == 0,
        _ => true,
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// MSE and coefficient of determination over a sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub mse: f64,
    pub r2: f64,
    /// Labels had zero variance, so r2 was reported as 0 by convention.
    pub degenerate_labels: bool,
}

/// Evaluates predictions against labels: `mse = mean (ŷ−y)²`,
/// `r2 = 1 − Σ(ŷ−y)²/Σ(y−ȳ)²`.
pub fn evaluate(learner: &Learner, samples: &[PredictionSample]) -> EvalReport {
    assert!(!samples.is_empty(), "cannot evaluate on an empty sample set");
    let preds = learner.predict_samples(samples);
    score_predictions(&preds, samples)
}

pub fn score_predictions(preds: &[f64], samples: &[PredictionSample]) -> EvalReport {
    let n = samples.len() as f64;
    let mean_label = samples.iter().map(|s| s.label).sum::<f64>() / n;
    let mut sse = 0.0;
    let mut variance = 0.0;
    for (p, s) in preds.iter().zip(samples) {
        sse += (p - s.label) * (p - s.label);
        variance += (s.label - mean_label) * (s.label - mean_label);
    }
    let mse = sse / n;
    let constant_labels = samples.iter().all(|s| s.label == samples[0].label);
    if variance == 0.0 || constant_labels {
        EvalReport {
            mse,
            r2: 0.0,
            degenerate_labels: true,
        }
    } else {
        EvalReport {
            mse,
            r2: 1.0 - sse / variance,
            degenerate_labels: false,
        }
    }
}

// ---------------------------------------------------------------------------
// Tasks and fitness
// ---------------------------------------------------------------------------

/// One base task: a cell's normalized series plus the split rule. Window
/// sets depend on the strategy's step number, so they are built on demand.
#[derive(Debug, Clone)]
pub struct Task {
    pub task_id: u32,
    pub series: NormalizedSeries,
    pub split_cfg: SplitConfig,
}

impl Task {
    pub fn new(task_id: u32, series: NormalizedSeries, split_cfg: SplitConfig) -> Self {
        Task {
            task_id,
            series,
            split_cfg,
        }
    }

    pub fn split_for(&self, n_s: usize) -> Result<SampleSplit> {
        SampleSplit::build(&self.series, n_s, self.split_cfg)
    }
}

/// Anything that can score a strategy with an actual fitness value while
/// counting how many real evaluations (training runs) it performed.
pub trait FitnessSource: Sync {
    fn fitness(&self, strategy: &Strategy) -> f64;
    /// Previously computed fitness, if any — a lookup that never triggers
    /// (or counts as) an actual evaluation.
    fn cached_fitness(&self, strategy: &Strategy) -> Option<f64>;
    /// Cumulative count of actual training runs (cache hits excluded).
    fn actual_evaluations(&self) -> u64;
}

/// Outcome of one actual strategy evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessRecord {
    pub validation_mse: f64,
    pub fitness: f64,
    pub diverged: bool,
}

/// Trains the model behind each requested strategy and returns the
/// reciprocal of its validation MSE; results are memoized per strategy and a
/// shared counter tracks actual training runs.
///
/// The cache is a concurrent map with last-write-wins semantics; values are
/// deterministic per strategy, so racing writers are benign. Callers that
/// need exact run accounting deduplicate strategies before evaluating in
/// parallel.
pub struct FitnessEvaluator<'a> {
    pub task: &'a Task,
    pub schema: &'a Schema,
    pub train_cfg: TrainConfig,
    pub seed: u64,
    cache: DashMap<Strategy, FitnessRecord>,
    counter: AtomicU64,
}

impl<'a> FitnessEvaluator<'a> {
    pub fn new(task: &'a Task, schema: &'a Schema, train_cfg: TrainConfig, seed: u64) -> Self {
        FitnessEvaluator {
            task,
            schema,
            train_cfg,
            seed,
            cache: DashMap::new(),
            counter: AtomicU64::new(0),
        }
    }

    pub fn record(&self, strategy: &Strategy) -> FitnessRecord {
        if let Some(r) = self.cache.get(strategy) {
            return *r;
        }
        let rec = self.evaluate_uncached(strategy);
        self.cache.insert(strategy.clone(), rec);
        rec
    }

    pub fn cached(&self, strategy: &Strategy) -> Option<FitnessRecord> {
        self.cache.get(strategy).map(|r| *r)
    }

    fn evaluate_uncached(&self, strategy: &Strategy) -> FitnessRecord {
        self.counter.fetch_add(1, Ordering::Relaxed);
        match self.train_and_score(strategy) {
            Ok(mse) => FitnessRecord {
                validation_mse: mse,
                fitness: 1.0 / mse.max(MSE_FLOOR),
                diverged: false,
            },
            // Divergence scores worst instead of aborting the search.
            Err(_) => FitnessRecord {
                validation_mse: f64::INFINITY,
                fitness: 0.0,
                diverged: true,
            },
        }
    }

    fn train_and_score(&self, strategy: &Strategy) -> Result<f64> {
        let n_s = self.schema.value_of(strategy, "n_s")? as usize;
        let lr = self.schema.value_of(strategy, "c")?;
        let split = self.task.split_for(n_s)?;
        let grid_index = self
            .schema
            .grid_index(strategy)
            .ok_or_else(|| Error::Invalid("strategy not in schema grid".into()))?;
        let model_seed = rng::mix(&[self.seed, u64::from(self.task.task_id), grid_index as u64]);
        let mut learner = Learner::build(self.schema, strategy, model_seed)?;
        train(&mut learner, &split.train, lr, &self.train_cfg, model_seed)?;
        let report = evaluate(&learner, &split.validation);
        Ok(report.mse)
    }

    /// Trains the strategy's model and reports test-set quality; uses the
    /// same seed derivation as fitness evaluation but does not touch the
    /// cache or counter (reporting is free).
    pub fn test_report(&self, strategy: &Strategy) -> Result<EvalReport> {
        let n_s = self.schema.value_of(strategy, "n_s")? as usize;
        let lr = self.schema.value_of(strategy, "c")?;
        let split = self.task.split_for(n_s)?;
        let grid_index = self
            .schema
            .grid_index(strategy)
            .ok_or_else(|| Error::Invalid("strategy not in schema grid".into()))?;
        let model_seed = rng::mix(&[self.seed, u64::from(self.task.task_id), grid_index as u64]);
        let mut learner = Learner::build(self.schema, strategy, model_seed)?;
        train(&mut learner, &split.train, lr, &self.train_cfg, model_seed)?;
        Ok(evaluate(&learner, &split.test))
    }
}

impl FitnessSource for FitnessEvaluator<'_> {
    fn fitness(&self, strategy: &Strategy) -> f64 {
        self.record(strategy).fitness
    }

    fn cached_fitness(&self, strategy: &Strategy) -> Option<f64> {
        self.cached(strategy).map(|r| r.fitness)
    }

    fn actual_evaluations(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }
}
