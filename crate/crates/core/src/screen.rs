//! Gated-residual-network fitness screener.
//!
//! Given a task's meta-features and a candidate strategy, the screener
//! predicts fitness so the genetic search can rank a whole offspring batch
//! and train only the few most promising candidates.
//!
//! The net has three sub-networks: meta-feature processing (a linear lift to
//! the working width, GRN blocks, and an importance branch — one GRN block
//! plus a softmax whose output gates the transformed features by Hadamard
//! product), gene processing (lift plus GRN blocks over the encoded
//! strategy), and fusion (concatenation, a lift, one GRN block, then a
//! fully-connected head down to a single score).
//!
//! Training regresses onto z-scored log fitness. Reciprocal-MSE fitness has
//! heavy tails; the log transform is monotone, and the search only consumes
//! the ranking, which a monotone transform preserves.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learner::{GeneScale, Schema, Strategy};
use crate::rng;
use crate::store::ScreenerCorpus;
use crate::tensor::layers::{accumulate_n, Dense, DenseCache, GrnBlock, GrnCache, Tunable};
use crate::tensor::serialize;
use crate::tensor::{
    hcat, hsplit, softmax_rows, softmax_rows_backward, Activation, AdamW, Matrix,
};

// ---------------------------------------------------------------------------
// Gene encoding
// ---------------------------------------------------------------------------

/// Encodes a strategy as one real per gene in [0,1]: min-max over the gene's
/// declared range, with learning-rate-style genes mapped through log10
/// first. The per-gene map is strictly monotone over distinct grid values,
/// so the encoding is a bijection from grid values to encoded values.
pub fn encode_strategy(schema: &Schema, strategy: &Strategy) -> Vec<f64> {
    schema
        .genes()
        .iter()
        .zip(&strategy.0)
        .map(|(gene, &vi)| {
            let raw = gene.values[vi as usize];
            let transform = |v: f64| match gene.scale {
                GeneScale::Linear => v,
                GeneScale::Log10 => v.log10(),
            };
            let v = transform(raw);
            let lo = gene.values.iter().cloned().map(transform).fold(f64::INFINITY, f64::min);
            let hi = gene
                .values
                .iter()
                .cloned()
                .map(transform)
                .fold(f64::NEG_INFINITY, f64::max);
            if hi == lo {
                0.0
            } else {
                (v - lo) / (hi - lo)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Screener network
// ---------------------------------------------------------------------------

/// Sizing and training settings. `paper` keeps the published configuration;
/// `desk` shrinks widths for laptop-scale suites.
#[derive(Debug, Clone)]
pub struct ScreenerConfig {
    pub width: usize,
    pub grn_blocks: usize,
    pub head_widths: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl ScreenerConfig {
    /// Published training configuration: 512-unit sub-networks, a
    /// 512→128→1 head, lr 0.001, batch 252, 400 epochs.
    pub fn paper() -> Self {
        ScreenerConfig {
            width: 512,
            grn_blocks: 2,
            head_widths: vec![512, 128],
            learning_rate: 0.001,
            batch_size: 252,
            epochs: 400,
            seed: 0,
        }
    }

    pub fn desk() -> Self {
        ScreenerConfig {
            width: 40,
            grn_blocks: 2,
            head_widths: vec![40, 20],
            learning_rate: 0.0015,
            batch_size: 128,
            epochs: 600,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScreenerNet {
    feature_count: usize,
    gene_count: usize,
    mfp_proj: Dense,
    mfp_blocks: Vec<GrnBlock>,
    importance_block: GrnBlock,
    gp_proj: Dense,
    gp_blocks: Vec<GrnBlock>,
    fusion_proj: Dense,
    fusion_block: GrnBlock,
    head: Vec<Dense>,
    /// Target-transform parameters fitted on the training corpus.
    target_mean: f64,
    target_std: f64,
}

pub struct ScreenerForward {
    mfp_proj: DenseCache,
    mfp_blocks: Vec<GrnCache>,
    importance: GrnCache,
    importance_softmax: Matrix,
    transformed: Matrix,
    gp_proj: DenseCache,
    gp_blocks: Vec<GrnCache>,
    fusion_proj: DenseCache,
    fusion_block: GrnCache,
    head: Vec<DenseCache>,
}

impl ScreenerNet {
    pub fn new(feature_count: usize, gene_count: usize, cfg: &ScreenerConfig) -> Self {
        let mut r = rng::stream(&[cfg.seed, 0x5c7ee]);
        let w = cfg.width;
        let mfp_proj = Dense::new(feature_count, w, Activation::Linear, &mut r);
        let mfp_blocks = (0..cfg.grn_blocks).map(|_| GrnBlock::new(w, w, &mut r)).collect();
        let importance_block = GrnBlock::new(w, w, &mut r);
        let gp_proj = Dense::new(gene_count, w, Activation::Linear, &mut r);
        let gp_blocks = (0..cfg.grn_blocks).map(|_| GrnBlock::new(w, w, &mut r)).collect();
        let fusion_proj = Dense::new(2 * w, w, Activation::Linear, &mut r);
        let fusion_block = GrnBlock::new(w, w, &mut r);
        let mut head = Vec::new();
        let mut prev = w;
        for &h in &cfg.head_widths {
            head.push(Dense::new(prev, h, Activation::Relu, &mut r));
            prev = h;
        }
        head.push(Dense::new(prev, 1, Activation::Linear, &mut r));
        ScreenerNet {
            feature_count,
            gene_count,
            mfp_proj,
            mfp_blocks,
            importance_block,
            gp_proj,
            gp_blocks,
            fusion_proj,
            fusion_block,
            head,
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn gene_count(&self) -> usize {
        self.gene_count
    }

    /// Batched forward: one (meta-feature, encoded-strategy) pair per row.
    pub fn forward(&self, features: &Matrix, genes: &Matrix) -> (Matrix, ScreenerForward) {
        assert_eq!(features.cols(), self.feature_count, "feature arity");
        assert_eq!(genes.cols(), self.gene_count, "gene arity");
        let (p, mfp_proj_cache) = self.mfp_proj.forward(features);
        let mut transformed = p.clone();
        let mut mfp_caches = Vec::with_capacity(self.mfp_blocks.len());
        for b in &self.mfp_blocks {
            let (y, c) = b.forward(&transformed);
            mfp_caches.push(c);
            transformed = y;
        }
        let (imp_pre, importance_cache) = self.importance_block.forward(&p);
        let importance = softmax_rows(&imp_pre);
        let mfp_out = transformed.hadamard(&importance);

        let (q, gp_proj_cache) = self.gp_proj.forward(genes);
        let mut gp_state = q;
        let mut gp_caches = Vec::with_capacity(self.gp_blocks.len());
        for b in &self.gp_blocks {
            let (y, c) = b.forward(&gp_state);
            gp_caches.push(c);
            gp_state = y;
        }

        let concat = hcat(&mfp_out, &gp_state);
        let (fused, fusion_proj_cache) = self.fusion_proj.forward(&concat);
        let (fusion_out, fusion_block_cache) = self.fusion_block.forward(&fused);

        let mut state = fusion_out;
        let mut head_caches = Vec::with_capacity(self.head.len());
        for layer in &self.head {
            let (y, c) = layer.forward(&state);
            head_caches.push(c);
            state = y;
        }
        (
            state,
            ScreenerForward {
                mfp_proj: mfp_proj_cache,
                mfp_blocks: mfp_caches,
                importance: importance_cache,
                importance_softmax: importance,
                transformed,
                gp_proj: gp_proj_cache,
                gp_blocks: gp_caches,
                fusion_proj: fusion_proj_cache,
                fusion_block: fusion_block_cache,
                head: head_caches,
            },
        )
    }

    /// The softmax importance vector for a feature row (sums to one).
    pub fn importance(&self, features: &[f64]) -> Vec<f64> {
        let f = Matrix::row_vector(features);
        let p = self.mfp_proj.infer(&f);
        let imp = softmax_rows(&self.importance_block.infer(&p));
        imp.as_slice().to_vec()
    }

    /// Predicted (transformed-scale) fitness score for one candidate.
    pub fn predict(&self, features: &[f64], encoded: &[f64]) -> f64 {
        let (score, _) = self.forward(
            &Matrix::row_vector(features),
            &Matrix::row_vector(encoded),
        );
        score[(0, 0)]
    }

    /// Gradients in params order given dL/dscore.
    pub fn backward(&self, cache: &ScreenerForward, dscore: &Matrix) -> Vec<Matrix> {
        let mut grads = self.zeroed_grads();
        let w = self.fusion_block.width();

        // Offsets mirror params() ordering.
        let mfp_proj_off = 0;
        let mfp_blocks_off = mfp_proj_off + 2;
        let per_block = 10;
        let importance_off = mfp_blocks_off + self.mfp_blocks.len() * per_block;
        let gp_proj_off = importance_off + per_block;
        let gp_blocks_off = gp_proj_off + 2;
        let fusion_proj_off = gp_blocks_off + self.gp_blocks.len() * per_block;
        let fusion_block_off = fusion_proj_off + 2;
        let head_off = fusion_block_off + per_block;

        let mut dstate = dscore.clone();
        for (i, layer) in self.head.iter().enumerate().rev() {
            let (dx, g) = layer.backward(&cache.head[i], &dstate);
            accumulate_n(&mut grads, head_off + i * 2, g);
            dstate = dx;
        }
        let (dfused, g) = self.fusion_block.backward(&cache.fusion_block, &dstate);
        accumulate_n(&mut grads, fusion_block_off, g);
        let (dconcat, g) = self.fusion_proj.backward(&cache.fusion_proj, &dfused);
        accumulate_n(&mut grads, fusion_proj_off, g);
        let (dmfp_out, mut dgp_state) = hsplit(&dconcat, w);

        for (i, b) in self.gp_blocks.iter().enumerate().rev() {
            let (dx, g) = b.backward(&cache.gp_blocks[i], &dgp_state);
            accumulate_n(&mut grads, gp_blocks_off + i * per_block, g);
            dgp_state = dx;
        }
        let (_, g) = self.gp_proj.backward(&cache.gp_proj, &dgp_state);
        accumulate_n(&mut grads, gp_proj_off, g);

        // mfp_out = transformed ⊙ importance
        let dtransformed = dmfp_out.hadamard(&cache.importance_softmax);
        let dimportance = dmfp_out.hadamard(&cache.transformed);
        let dimp_pre = softmax_rows_backward(&cache.importance_softmax, &dimportance);
        let (dp_importance, g) = self
            .importance_block
            .backward(&cache.importance, &dimp_pre);
        accumulate_n(&mut grads, importance_off, g);

        let mut dt = dtransformed;
        for (i, b) in self.mfp_blocks.iter().enumerate().rev() {
            let (dx, g) = b.backward(&cache.mfp_blocks[i], &dt);
            accumulate_n(&mut grads, mfp_blocks_off + i * per_block, g);
            dt = dx;
        }
        let dp = dt.add(&dp_importance);
        let (_, g) = self.mfp_proj.backward(&cache.mfp_proj, &dp);
        accumulate_n(&mut grads, mfp_proj_off, g);
        grads
    }

    /// Raw fitness → regression target (z-scored log fitness).
    pub fn transform_target(&self, fitness: f64) -> f64 {
        (fitness.max(1e-9).ln() - self.target_mean) / self.target_std
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let named = self.named_params();
        let mut tensors: Vec<(&str, &Matrix)> = named
            .iter()
            .map(|(n, m)| (n.as_str(), *m))
            .collect();
        let meta = Matrix::from_vec(
            1,
            4,
            vec![
                self.feature_count as f64,
                self.gene_count as f64,
                self.target_mean,
                self.target_std,
            ],
        );
        tensors.push(("target_transform", &meta));
        serialize::write_tensors(path, &tensors)
    }

    /// Restores parameters into a same-shaped net built from its config.
    pub fn load_into(&mut self, path: &Path) -> Result<()> {
        let tensors = serialize::read_tensors(path)?;
        let mut map: std::collections::HashMap<String, Matrix> = tensors.into_iter().collect();
        if let Some(meta) = map.remove("target_transform") {
            self.target_mean = meta[(0, 2)];
            self.target_std = meta[(0, 3)];
        }
        let names: Vec<String> = self.named_params().iter().map(|(n, _)| n.clone()).collect();
        let mut params = self.params_mut();
        for (name, slot) in names.iter().zip(params.iter_mut()) {
            let loaded = map.remove(name).ok_or_else(|| {
                Error::Invalid(format!("checkpoint missing tensor '{name}'"))
            })?;
            if (loaded.rows(), loaded.cols()) != (slot.rows(), slot.cols()) {
                return Err(Error::Invalid(format!(
                    "checkpoint tensor '{name}' has shape {}x{}, expected {}x{}",
                    loaded.rows(),
                    loaded.cols(),
                    slot.rows(),
                    slot.cols()
                )));
            }
            **slot = loaded;
        }
        Ok(())
    }

    fn named_params(&self) -> Vec<(String, &Matrix)> {
        let names = self.param_names();
        names.into_iter().zip(self.params()).collect()
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["mfp_proj.w".into(), "mfp_proj.b".into()];
        let block_names = |prefix: &str| -> Vec<String> {
            [
                "dense_in.w",
                "dense_in.b",
                "dense_out.w",
                "dense_out.b",
                "glu.wg",
                "glu.bg",
                "glu.wv",
                "glu.bv",
                "norm.gain",
                "norm.bias",
            ]
            .iter()
            .map(|s| format!("{prefix}.{s}"))
            .collect()
        };
        for i in 0..self.mfp_blocks.len() {
            names.extend(block_names(&format!("mfp_block{i}")));
        }
        names.extend(block_names("importance"));
        names.push("gp_proj.w".into());
        names.push("gp_proj.b".into());
        for i in 0..self.gp_blocks.len() {
            names.extend(block_names(&format!("gp_block{i}")));
        }
        names.push("fusion_proj.w".into());
        names.push("fusion_proj.b".into());
        names.extend(block_names("fusion"));
        for i in 0..self.head.len() {
            names.push(format!("head{i}.w"));
            names.push(format!("head{i}.b"));
        }
        names
    }
}

impl Tunable for ScreenerNet {
    fn params(&self) -> Vec<&Matrix> {
        let mut p = self.mfp_proj.params();
        for b in &self.mfp_blocks {
            p.extend(b.params());
        }
        p.extend(self.importance_block.params());
        p.extend(self.gp_proj.params());
        for b in &self.gp_blocks {
            p.extend(b.params());
        }
        p.extend(self.fusion_proj.params());
        p.extend(self.fusion_block.params());
        for l in &self.head {
            p.extend(l.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = vec![&mut self.mfp_proj.w, &mut self.mfp_proj.b];
        for b in &mut self.mfp_blocks {
            p.extend(b.params_mut());
        }
        p.extend(self.importance_block.params_mut());
        p.push(&mut self.gp_proj.w);
        p.push(&mut self.gp_proj.b);
        for b in &mut self.gp_blocks {
            p.extend(b.params_mut());
        }
        p.push(&mut self.fusion_proj.w);
        p.push(&mut self.fusion_proj.b);
        p.extend(self.fusion_block.params_mut());
        for l in &mut self.head {
            p.push(&mut l.w);
            p.push(&mut l.b);
        }
        p
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Fits the net to a corpus by minibatch MSE regression on log fitness
/// z-scored within each task's rows; returns the per-epoch loss curve.
///
/// The per-task standardization matters: raw fitness levels vary by orders
/// of magnitude across tasks, and a globally scaled target makes the net
/// spend its capacity predicting task level instead of the within-task
/// ranking that screening actually consumes. Per-task z-scoring is an
/// increasing affine map per task, so every task's ranking is untouched.
pub fn train_screener(
    net: &mut ScreenerNet,
    corpus: &ScreenerCorpus,
    cfg: &ScreenerConfig,
) -> Result<Vec<f64>> {
    if corpus.rows.is_empty() {
        return Err(Error::Config("screener corpus is empty".into()));
    }
    let n = corpus.rows.len();
    let logs: Vec<f64> = corpus.rows.iter().map(|r| r.fitness.max(1e-9).ln()).collect();
    let mean = logs.iter().sum::<f64>() / n as f64;
    let var = logs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    net.target_mean = mean;
    net.target_std = var.sqrt().max(1e-9);

    let mut task_stats: std::collections::HashMap<u32, (f64, f64, f64)> =
        std::collections::HashMap::new();
    for (r, &l) in corpus.rows.iter().zip(&logs) {
        let e = task_stats.entry(r.task_id).or_insert((0.0, 0.0, 0.0));
        e.0 += l;
        e.1 += l * l;
        e.2 += 1.0;
    }
    let targets: Vec<f64> = corpus
        .rows
        .iter()
        .zip(&logs)
        .map(|(r, &l)| {
            let (s, s2, c) = task_stats[&r.task_id];
            let m = s / c;
            let std = ((s2 / c - m * m).max(0.0)).sqrt().max(1e-9);
            (l - m) / std
        })
        .collect();
    let mut opt = AdamW::new(cfg.learning_rate, 0.0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut r = rng::stream(&[cfg.seed, 0xb47c4, epoch as u64]);
        order.shuffle(&mut r);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let features = Matrix::from_rows(
                &chunk.iter().map(|&i| corpus.rows[i].features.clone()).collect::<Vec<_>>(),
            );
            let genes = Matrix::from_rows(
                &chunk.iter().map(|&i| corpus.rows[i].encoded.clone()).collect::<Vec<_>>(),
            );
            let y = Matrix::col_vector(&chunk.iter().map(|&i| targets[i]).collect::<Vec<_>>());
            let (pred, cache) = net.forward(&features, &genes);
            let diff = pred.sub(&y);
            let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / chunk.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let grads = net.backward(&cache, &diff.scale(2.0 / chunk.len() as f64));
            opt.step(&mut net.params_mut(), &grads);
            epoch_loss += loss;
            batches += 1.0;
        }
        curve.push(epoch_loss / batches);
    }
    Ok(curve)
}

// ---------------------------------------------------------------------------
// Screening
// ---------------------------------------------------------------------------

/// Scores offspring without evaluating actual fitness. Implemented by the
/// trained net and by test doubles (for example a perfect oracle).
pub trait OffspringScreener: Sync {
    fn scores(&self, features: &[f64], offspring: &[Strategy], schema: &Schema) -> Vec<f64>;
}

impl OffspringScreener for ScreenerNet {
    fn scores(&self, features: &[f64], offspring: &[Strategy], schema: &Schema) -> Vec<f64> {
        if offspring.is_empty() {
            return Vec::new();
        }
        let f = Matrix::from_rows(&vec![features.to_vec(); offspring.len()]);
        let g = Matrix::from_rows(
            &offspring
                .iter()
                .map(|s| encode_strategy(schema, s))
                .collect::<Vec<_>>(),
        );
        let (scores, _) = self.forward(&f, &g);
        scores.as_slice().to_vec()
    }
}

/// Wraps a plain scoring function as a screener (test doubles, oracles).
pub struct FnScreener<F: Fn(&Strategy) -> f64 + Sync>(pub F);

impl<F: Fn(&Strategy) -> f64 + Sync> OffspringScreener for FnScreener<F> {
    fn scores(&self, _features: &[f64], offspring: &[Strategy], _schema: &Schema) -> Vec<f64> {
        offspring.par_iter().map(|s| (self.0)(s)).collect()
    }
}

/// Indifferent screener: every candidate scores zero, so selection falls
/// back to grid order. Used when screening is disabled (budget = offspring).
pub struct NullScreener;

impl OffspringScreener for NullScreener {
    fn scores(&self, _features: &[f64], offspring: &[Strategy], _schema: &Schema) -> Vec<f64> {
        vec![0.0; offspring.len()]
    }
}

/// Exact top-`budget` offspring by predicted score (ties by grid order).
/// Pure ranking: permuting the offspring list cannot change the selected
/// multiset, and no actual fitness evaluation happens here.
pub fn screen(
    screener: &dyn OffspringScreener,
    features: &[f64],
    offspring: &[Strategy],
    schema: &Schema,
    budget: usize,
) -> Vec<Strategy> {
    assert!(
        budget <= offspring.len(),
        "screen budget {} exceeds offspring count {}",
        budget,
        offspring.len()
    );
    let scores = screener.scores(features, offspring, schema);
    let mut order: Vec<usize> = (0..offspring.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                let ga = schema.grid_index(&offspring[a]).unwrap_or(usize::MAX);
                let gb = schema.grid_index(&offspring[b]).unwrap_or(usize::MAX);
                ga.cmp(&gb)
            })
    });
    order[..budget]
        .iter()
        .map(|&i| offspring[i].clone())
        .collect()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&x, &y| values[x].partial_cmp(&values[y]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::ScreenerRow;

    #[test]
    fn learning_rate_encodes_on_log_scale() {
        let schema = Schema::adnn_full();
        let grid_min = schema.strategy_at(0);
        let encoded = encode_strategy(&schema, grid_min);
        // First grid point takes the first value of every gene; n_s=6 → 0,
        // c=0.01 → 1 (largest learning rate on the log scale).
        assert_eq!(encoded[0], 0.0);
        assert_eq!(encoded[1], 1.0);

        let mid = schema
            .strategy_from_values(&[6.0, 0.001, 1.0, 2.0, 8.0])
            .unwrap();
        let e = encode_strategy(&schema, &mid);
        assert!((e[1] - 0.5).abs() < 1e-12);
        let low = schema
            .strategy_from_values(&[6.0, 0.0001, 1.0, 2.0, 8.0])
            .unwrap();
        assert_eq!(encode_strategy(&schema, &low)[1], 0.0);
    }

    #[test]
    fn grid_minimum_encodes_to_zeros() {
        let schema = Schema::mlp_desk();
        // Gene minima: n_s=6, c=0.001 (log-min), layers=1, neure=4.
        let s = schema.strategy_from_values(&[6.0, 0.001, 1.0, 4.0]).unwrap();
        let e = encode_strategy(&schema, &s);
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoding_is_injective_over_the_grid() {
        for schema in [Schema::adnn_full(), Schema::mlp_desk()] {
            let mut seen = std::collections::HashSet::new();
            for s in schema.grid() {
                let key: Vec<u64> = encode_strategy(&schema, s)
                    .iter()
                    .map(|v| v.to_bits())
                    .collect();
                assert!(seen.insert(key), "encoding collision in grid");
            }
        }
    }

    #[test]
    fn importance_vector_is_a_probability_vector() {
        let cfg = ScreenerConfig {
            width: 8,
            grn_blocks: 1,
            head_widths: vec![8],
            ..ScreenerConfig::desk()
        };
        let net = ScreenerNet::new(5, 3, &cfg);
        let imp = net.importance(&[0.1, 0.9, 0.3, 0.0, 1.0]);
        let sum: f64 = imp.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(imp.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn prediction_is_deterministic() {
        let cfg = ScreenerConfig {
            width: 8,
            grn_blocks: 1,
            head_widths: vec![8],
            ..ScreenerConfig::desk()
        };
        let net = ScreenerNet::new(4, 3, &cfg);
        let f = [0.2, 0.4, 0.6, 0.8];
        let e = [0.0, 0.5, 1.0];
        assert_eq!(net.predict(&f, &e), net.predict(&f, &e));
    }

    #[test]
    fn gradients_match_finite_differences_at_width_8() {
        let cfg = ScreenerConfig {
            width: 8,
            grn_blocks: 1,
            head_widths: vec![8],
            seed: 3,
            ..ScreenerConfig::desk()
        };
        let mut net = ScreenerNet::new(4, 3, &cfg);
        let mut r = rng::stream(&[81]);
        let features = Matrix::randn(3, 4, 0.5, &mut r).map(|v| v.abs().min(1.0));
        let genes = Matrix::randn(3, 3, 0.5, &mut r).map(|v| v.abs().min(1.0));
        let target = Matrix::randn(3, 1, 1.0, &mut r);
        let report = crate::tensor::gradcheck::check_gradients(
            &mut net,
            |n| {
                let (y, _) = n.forward(&features, &genes);
                crate::tensor::gradcheck::mse_scalar(&y, &target)
            },
            |n| {
                let (y, cache) = n.forward(&features, &genes);
                let dy = y.sub(&target).scale(2.0 / y.len() as f64);
                n.backward(&cache, &dy)
            },
        );
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn paper_preset_matches_published_training_settings() {
        let cfg = ScreenerConfig::paper();
        assert_eq!(cfg.learning_rate, 0.001);
        assert_eq!(cfg.batch_size, 252);
        assert_eq!(cfg.epochs, 400);
        assert_eq!(cfg.width, 512);
    }

    fn tiny_corpus(rows: usize) -> ScreenerCorpus {
        let mut r = rng::stream(&[82]);
        let rows = (0..rows)
            .map(|i| {
                let features = vec![rand::Rng::gen::<f64>(&mut r), rand::Rng::gen::<f64>(&mut r)];
                let encoded = vec![rand::Rng::gen::<f64>(&mut r)];
                // Smooth synthetic fitness surface.
                let fitness =
                    (2.0 + (features[0] * 3.0).sin() + encoded[0] * 2.0).exp();
                ScreenerRow {
                    task_id: i as u32,
                    features,
                    encoded,
                    fitness,
                }
            })
            .collect();
        ScreenerCorpus { rows }
    }

    #[test]
    fn memorizes_a_tiny_corpus() {
        let cfg = ScreenerConfig {
            width: 16,
            grn_blocks: 1,
            head_widths: vec![16],
            learning_rate: 0.003,
            batch_size: 32,
            epochs: 400,
            seed: 5,
        };
        let corpus = tiny_corpus(64);
        let mut net = ScreenerNet::new(2, 1, &cfg);
        let curve = train_screener(&mut net, &corpus, &cfg).unwrap();
        assert_eq!(curve.len(), 400);
        assert!(
            *curve.last().unwrap() < 1e-3,
            "final loss {}",
            curve.last().unwrap()
        );
    }

    #[test]
    fn screen_returns_everything_when_budget_covers_all() {
        let schema = Schema::mlp_desk();
        let offspring: Vec<Strategy> = schema.grid()[..10].to_vec();
        let picked = screen(&NullScreener, &[0.0], &offspring, &schema, 10);
        assert_eq!(picked.len(), 10);
    }

    #[test]
    fn screen_is_permutation_invariant_and_counts_nothing() {
        let schema = Schema::mlp_desk();
        let mut offspring: Vec<Strategy> = schema.grid()[..12].to_vec();
        // Score by grid index so the expected winners are known.
        let screener = FnScreener(|s: &Strategy| {
            Schema::mlp_desk().grid_index(s).unwrap() as f64
        });
        let a = screen(&screener, &[0.0], &offspring, &schema, 4);
        offspring.reverse();
        let b = screen(&screener, &[0.0], &offspring, &schema, 4);
        let key = |v: &[Strategy]| {
            let mut k: Vec<usize> =
                v.iter().map(|s| schema.grid_index(s).unwrap()).collect();
            k.sort_unstable();
            k
        };
        assert_eq!(key(&a), key(&b));
        assert_eq!(key(&a), vec![8, 9, 10, 11]);
    }

    #[test]
    fn oracle_screener_keeps_the_true_best_offspring() {
        // With a perfect oracle, screening to τ·M and then evaluating those
        // must recover the same best as evaluating every offspring.
        let schema = Schema::mlp_desk();
        let true_fitness = |s: &Strategy| {
            // Smooth toy landscape over the encoded cube.
            let e = encode_strategy(&Schema::mlp_desk(), s);
            10.0 - e.iter().map(|v| (v - 0.4) * (v - 0.4)).sum::<f64>()
        };
        let oracle = FnScreener(true_fitness);
        let mut r = rng::stream(&[91]);
        for _ in 0..10 {
            let offspring: Vec<Strategy> =
                (0..20).map(|_| schema.random_strategy(&mut r)).collect();
            let kept = screen(&oracle, &[], &offspring, &schema, 6);
            let best_kept = kept
                .iter()
                .map(&true_fitness)
                .fold(f64::NEG_INFINITY, f64::max);
            let best_all = offspring
                .iter()
                .map(&true_fitness)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(best_kept, best_all);
        }
    }

    #[test]
    fn irrelevant_gene_moves_scores_less_than_a_relevant_one() {
        // Train on targets that depend only on the first gene; after
        // training, flipping the irrelevant gene should move the score far
        // less than flipping the relevant one (diagnostic with a relative
        // bar, not an absolute one — the net never sees the labels).
        let mut r = rng::stream(&[92]);
        let rows: Vec<ScreenerRow> = (0..200)
            .map(|i| {
                let g0: f64 = rand::Rng::gen(&mut r);
                let g1: f64 = rand::Rng::gen(&mut r);
                ScreenerRow {
                    task_id: i % 4,
                    features: vec![(i % 4) as f64 / 3.0],
                    encoded: vec![g0, g1],
                    fitness: (3.0 * g0).exp(),
                }
            })
            .collect();
        let corpus = ScreenerCorpus { rows };
        let cfg = ScreenerConfig {
            width: 16,
            grn_blocks: 1,
            head_widths: vec![16],
            learning_rate: 0.002,
            batch_size: 32,
            epochs: 300,
            seed: 9,
        };
        let mut net = ScreenerNet::new(1, 2, &cfg);
        train_screener(&mut net, &corpus, &cfg).unwrap();
        let mut relevant = 0.0;
        let mut irrelevant = 0.0;
        for k in 0..20 {
            let base = [k as f64 / 19.0, 0.5];
            let f = [0.3];
            relevant +=
                (net.predict(&f, &[1.0, base[1]]) - net.predict(&f, &[0.0, base[1]])).abs();
            irrelevant +=
                (net.predict(&f, &[base[0], 1.0]) - net.predict(&f, &[base[0], 0.0])).abs();
        }
        assert!(
            irrelevant < relevant,
            "irrelevant-gene sensitivity {irrelevant} >= relevant-gene {relevant}"
        );
    }

    #[test]
    fn checkpoint_round_trips() {
        let cfg = ScreenerConfig {
            width: 8,
            grn_blocks: 1,
            head_widths: vec![8],
            seed: 11,
            ..ScreenerConfig::desk()
        };
        let mut net = ScreenerNet::new(3, 2, &cfg);
        net.target_mean = 0.7;
        net.target_std = 2.3;
        let dir = std::env::temp_dir().join("hypercast_screener_ckpt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("screener.ckpt");
        net.save(&path).unwrap();
        let mut other = ScreenerNet::new(3, 2, &ScreenerConfig { seed: 99, ..cfg });
        other.load_into(&path).unwrap();
        assert_eq!(net.params(), other.params());
        assert_eq!(net.target_mean, other.target_mean);
        let f = [0.1, 0.2, 0.3];
        let e = [0.4, 0.5];
        assert_eq!(net.predict(&f, &e), other.predict(&f, &e));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn spearman_handles_perfect_and_inverse_rankings() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [10.0, 20.0, 30.0, 40.0];
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
        let c = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&a, &c) + 1.0).abs() < 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn encoding_lands_on_the_unit_cube(gi in 0usize..567) {
                let schema = Schema::adnn_full();
                let e = encode_strategy(&schema, schema.strategy_at(gi));
                prop_assert_eq!(e.len(), schema.gene_count());
                prop_assert!(e.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
