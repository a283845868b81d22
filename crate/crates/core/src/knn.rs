//! Learned task-to-task distance and nearest-neighbor retrieval.
//!
//! Euclidean distance over meta-features would weight every feature
//! equally, but features contribute unequally to hyper-parameter choice. A
//! small MLP instead learns the distance from data: the ground truth for an
//! ordered pair (p, r) is the validation MSE task r suffers when it adopts
//! task p's optimal strategy — read straight from r's fitness table, no
//! retraining. The distance is asymmetric by construction.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;
use crate::store::{FitnessTable, MetaSample};
use crate::tensor::layers::{accumulate_n, Dense, DenseCache, Tunable};
use crate::tensor::{serialize, Activation, AdamW, Matrix};

/// One supervised pair: how well source task p's label serves query task r.
#[derive(Debug, Clone)]
pub struct DistancePairSample {
    pub source_task: u32,
    pub query_task: u32,
    /// Network input: source features then query features (length 2I).
    pub features: Vec<f64>,
    /// Raw ground-truth distance: r's validation MSE under p's label.
    pub raw_rd: f64,
}

/// Every ordered pair (source p, query r) across the store, self-pairs
/// included; `samples[i]` must align with `tables[i]`.
pub fn build_pair_corpus(
    samples: &[MetaSample],
    tables: &[FitnessTable],
    schema: &crate::learner::Schema,
) -> Result<Vec<DistancePairSample>> {
    if samples.len() != tables.len() {
        return Err(Error::Invalid("samples and tables must align".into()));
    }
    let mut pairs = Vec::with_capacity(samples.len() * samples.len());
    for (p, source) in samples.iter().enumerate() {
        let label_index = schema
            .grid_index(&source.label)
            .ok_or_else(|| Error::Invalid("label strategy not in grid".into()))?;
        for (r, query) in samples.iter().enumerate() {
            let rec = tables[r].get(label_index).ok_or_else(|| {
                Error::Invalid(format!(
                    "table for task {} missing label strategy of task {}",
                    query.task_id, source.task_id
                ))
            })?;
            let mut features = source.features.clone();
            features.extend_from_slice(&query.features);
            pairs.push(DistancePairSample {
                source_task: source.task_id,
                query_task: query.task_id,
                features,
                raw_rd: rec.validation_mse,
            });
        }
        let _ = p;
    }
    Ok(pairs)
}

/// MLP mapping a concatenated feature pair to a nonnegative scalar distance
/// (softplus output head).
#[derive(Debug, Clone)]
pub struct DistanceNet {
    layers: Vec<Dense>,
    feature_count: usize,
}

#[derive(Debug, Clone)]
pub struct DistanceConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            hidden: vec![64, 64],
            learning_rate: 0.001,
            batch_size: 64,
            epochs: 200,
            seed: 0,
        }
    }
}

impl DistanceNet {
    /// `feature_count` is I, the per-task meta-feature arity; the input
    /// layer sees 2I.
    pub fn new(feature_count: usize, cfg: &DistanceConfig) -> Self {
        let mut r = rng::stream(&[cfg.seed, 0xd157]);
        let mut layers = Vec::new();
        let mut prev = 2 * feature_count;
        for &h in &cfg.hidden {
            layers.push(Dense::new(prev, h, Activation::Relu, &mut r));
            prev = h;
        }
        layers.push(Dense::new(prev, 1, Activation::Softplus, &mut r));
        DistanceNet {
            layers,
            feature_count,
        }
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn forward(&self, x: &Matrix) -> (Matrix, Vec<DenseCache>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut state = x.clone();
        for l in &self.layers {
            let (y, c) = l.forward(&state);
            caches.push(c);
            state = y;
        }
        (state, caches)
    }

    fn backward(&self, caches: &[DenseCache], dy: &Matrix) -> Vec<Matrix> {
        let mut grads = self.zeroed_grads();
        let mut dstate = dy.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let (dx, g) = l.backward(&caches[i], &dstate);
            accumulate_n(&mut grads, i * 2, g);
            dstate = dx;
        }
        grads
    }

    /// Predicted distance from stored task p to query r; nonnegative.
    pub fn distance(&self, source_features: &[f64], query_features: &[f64]) -> f64 {
        let mut input = source_features.to_vec();
        input.extend_from_slice(query_features);
        let x = Matrix::row_vector(&input);
        let mut state = x;
        for l in &self.layers {
            state = l.infer(&state);
        }
        state[(0, 0)]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors = Vec::new();
        let names: Vec<String> = (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.w"), format!("layer{i}.b")])
            .collect();
        for (name, param) in names.iter().zip(self.params()) {
            tensors.push((name.as_str(), param));
        }
        serialize::write_tensors(path, &tensors)
    }

    pub fn load_into(&mut self, path: &Path) -> Result<()> {
        let loaded = serialize::read_tensors(path)?;
        let mut map: std::collections::HashMap<String, Matrix> = loaded.into_iter().collect();
        let names: Vec<String> = (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.w"), format!("layer{i}.b")])
            .collect();
        let mut params = self.params_mut();
        for (name, slot) in names.iter().zip(params.iter_mut()) {
            let t = map
                .remove(name)
                .ok_or_else(|| Error::Invalid(format!("checkpoint missing tensor '{name}'")))?;
            if (t.rows(), t.cols()) != (slot.rows(), slot.cols()) {
                return Err(Error::Invalid(format!("checkpoint tensor '{name}' shape mismatch")));
            }
            **slot = t;
        }
        Ok(())
    }
}

impl Tunable for DistanceNet {
    fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// MSE regression of predicted distance onto min-max-scaled RD targets.
/// Returns the per-epoch loss curve.
pub fn train_distance_net(
    net: &mut DistanceNet,
    corpus: &[DistancePairSample],
    cfg: &DistanceConfig,
) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::Config("distance corpus is empty".into()));
    }
    // Raw MSEs span orders of magnitude across tasks; scale to [0,1].
    // Non-finite RDs (diverged strategies) pin to the worst finite value.
    let finite_max = corpus
        .iter()
        .map(|s| s.raw_rd)
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let finite_min = corpus
        .iter()
        .map(|s| s.raw_rd)
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !finite_max.is_finite() {
        return Err(Error::Invalid("no finite distance targets".into()));
    }
    let span = (finite_max - finite_min).max(f64::MIN_POSITIVE);
    let target_of = |rd: f64| {
        let v = if rd.is_finite() { rd } else { finite_max };
        ((v - finite_min) / span).clamp(0.0, 1.0)
    };

    let mut opt = AdamW::new(cfg.learning_rate, 0.0);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.batch_size < corpus.len() {
            let mut r = rng::stream(&[cfg.seed, 0xd157aa, epoch as u64]);
            order.shuffle(&mut r);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let x = Matrix::from_rows(
                &chunk.iter().map(|&i| corpus[i].features.clone()).collect::<Vec<_>>(),
            );
            let y = Matrix::col_vector(
                &chunk.iter().map(|&i| target_of(corpus[i].raw_rd)).collect::<Vec<_>>(),
            );
            let (pred, caches) = net.forward(&x);
            let diff = pred.sub(&y);
            let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / chunk.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let grads = net.backward(&caches, &diff.scale(2.0 / chunk.len() as f64));
            opt.step(&mut net.params_mut(), &grads);
            epoch_loss += loss;
            batches += 1.0;
        }
        curve.push(epoch_loss / batches);
    }
    Ok(curve)
}

/// A retrieved neighbor: index into the store plus its predicted distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub store_index: usize,
    pub task_id: u32,
    pub distance: f64,
}

/// Exact top-k stored samples by predicted distance to the query features,
/// ascending; ties break by task id.
pub fn nearest(
    net: &DistanceNet,
    store: &[MetaSample],
    query_features: &[f64],
    k: usize,
) -> Result<Vec<Neighbor>> {
    if store.is_empty() {
        return Err(Error::Invalid("meta-sample store is empty".into()));
    }
    if k == 0 || k > store.len() {
        return Err(Error::Config(format!(
            "k = {k} out of range for a store of {}",
            store.len()
        )));
    }
    let mut neighbors: Vec<Neighbor> = store
        .iter()
        .enumerate()
        .map(|(i, s)| Neighbor {
            store_index: i,
            task_id: s.task_id,
            distance: net.distance(&s.features, query_features),
        })
        .collect();
    neighbors.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.task_id.cmp(&b.task_id))
    });
    neighbors.truncate(k);
    Ok(neighbors)
}

/// Retrieval log rows `query_task, rank, source_task, distance`.
pub fn format_retrieval(query_task: u32, neighbors: &[Neighbor]) -> Vec<String> {
    neighbors
        .iter()
        .enumerate()
        .map(|(rank, n)| format!("{},{},{},{}", query_task, rank + 1, n.task_id, n.distance))
        .collect()
}
