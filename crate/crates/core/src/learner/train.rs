//! Model construction and the shared training loop.

use rand::seq::SliceRandom;

use super::adnn::{Adnn, AdnnCache};
use super::mlp::Mlp;
use super::recurrent::{Gru, Lstm};
use super::{ModelKind, Schema, Strategy};
use crate::data::PredictionSample;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::layers::Tunable;
use crate::tensor::{AdamW, Matrix};

/// Trainer settings shared by every base learner. The learning rate itself
/// is a gene, so it arrives with the strategy, not here.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            weight_decay: 0.01,
            shuffle: true,
        }
    }
}

/// Any of the four base learners; constructors and training treat them
/// uniformly.
#[derive(Debug, Clone)]
pub enum Learner {
    Mlp(Mlp),
    Adnn(Box<Adnn>),
    Gru(Gru),
    Lstm(Lstm),
}

impl Learner {
    /// Builds a model for the strategy with a deterministic seed.
    pub fn build(schema: &Schema, strategy: &Strategy, seed: u64) -> Result<Learner> {
        if !schema.contains(strategy) {
            return Err(Error::Invalid(
                "strategy is not a member of the schema grid".into(),
            ));
        }
        let n_s = schema.value_of(strategy, "n_s")? as usize;
        let mut r = rng::stream(&[seed]);
        match schema.kind() {
            ModelKind::Mlp => {
                let layers = schema.value_of(strategy, "layers")? as usize;
                let neure = schema.value_of(strategy, "neure")? as usize;
                Ok(Learner::Mlp(Mlp::new(n_s, layers, neure, &mut r)))
            }
            ModelKind::Adnn => {
                let l_e = schema.value_of(strategy, "l_e")? as usize;
                let h_e = schema.value_of(strategy, "h_e")? as usize;
                let d_model = schema.value_of(strategy, "d_model")? as usize;
                if h_e == 0 || d_model % h_e != 0 {
                    return Err(Error::Config(format!(
                        "incompatible attention pair: {h_e} heads on width {d_model}"
                    )));
                }
                Ok(Learner::Adnn(Box::new(Adnn::new(
                    n_s, l_e, h_e, d_model, &mut r,
                ))))
            }
            ModelKind::Gru => {
                let layers = schema.value_of(strategy, "layers")? as usize;
                let neure = schema.value_of(strategy, "neure")? as usize;
                Ok(Learner::Gru(Gru::new(n_s, layers, neure, &mut r)))
            }
            ModelKind::Lstm => {
                let layers = schema.value_of(strategy, "layers")? as usize;
                let neure = schema.value_of(strategy, "neure")? as usize;
                Ok(Learner::Lstm(Lstm::new(n_s, layers, neure, &mut r)))
            }
        }
    }

    pub fn n_s(&self) -> usize {
        match self {
            Learner::Mlp(m) => m.n_s,
            Learner::Adnn(m) => m.n_s,
            Learner::Gru(m) => m.n_s,
            Learner::Lstm(m) => m.n_s,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Learner::Mlp(m) => m.param_count(),
            Learner::Adnn(m) => m.param_count(),
            Learner::Gru(m) => m.param_count(),
            Learner::Lstm(m) => m.param_count(),
        }
    }

    /// Inference-mode predictions, one per window row.
    pub fn predict(&self, windows: &Matrix) -> Vec<f64> {
        let preds = match self {
            Learner::Mlp(m) => m.infer(windows),
            Learner::Adnn(m) => m.infer(windows),
            Learner::Gru(m) => m.infer(windows),
            Learner::Lstm(m) => m.infer(windows),
        };
        preds.as_slice().to_vec()
    }

    pub fn predict_samples(&self, samples: &[PredictionSample]) -> Vec<f64> {
        self.predict(&windows_matrix(samples))
    }

    fn tensors(&self) -> (Vec<&Matrix>, Vec<&Matrix>) {
        match self {
            Learner::Mlp(m) => (m.params(), Vec::new()),
            Learner::Adnn(m) => (m.params(), m.norm_state()),
            Learner::Gru(m) => (m.params(), Vec::new()),
            Learner::Lstm(m) => (m.params(), Vec::new()),
        }
    }

    fn tensors_mut(&mut self) -> (Vec<&mut Matrix>, Vec<&mut Matrix>) {
        match self {
            Learner::Mlp(m) => (m.params_mut(), Vec::new()),
            Learner::Adnn(m) => m.tensors_mut(),
            Learner::Gru(m) => (m.params_mut(), Vec::new()),
            Learner::Lstm(m) => (m.params_mut(), Vec::new()),
        }
    }

    /// Writes the model as a named tensor dump (trainable parameters plus
    /// any running statistics).
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let (params, state) = self.tensors();
        let mut names: Vec<String> = (0..params.len()).map(|i| format!("param.{i}")).collect();
        names.extend((0..state.len()).map(|i| format!("state.{i}")));
        let tensors: Vec<(&str, &Matrix)> = names
            .iter()
            .map(|n| n.as_str())
            .zip(params.into_iter().chain(state))
            .collect();
        crate::tensor::serialize::write_tensors(path, &tensors)
    }

    /// Restores a checkpoint into a same-architecture model.
    pub fn load_into(&mut self, path: &std::path::Path) -> Result<()> {
        let loaded = crate::tensor::serialize::read_tensors(path)?;
        let mut map: std::collections::HashMap<String, Matrix> = loaded.into_iter().collect();
        let (params, state) = self.tensors_mut();
        let n_params = params.len();
        for (i, slot) in params.into_iter().chain(state).enumerate() {
            let name = if i < n_params {
                format!("param.{i}")
            } else {
                format!("state.{}", i - n_params)
            };
            let t = map
                .remove(&name)
                .ok_or_else(|| Error::Invalid(format!("checkpoint missing tensor '{name}'")))?;
            if (t.rows(), t.cols()) != (slot.rows(), slot.cols()) {
                return Err(Error::Invalid(format!(
                    "checkpoint tensor '{name}' has shape {}x{}, expected {}x{}",
                    t.rows(),
                    t.cols(),
                    slot.rows(),
                    slot.cols()
                )));
            }
            *slot = t;
        }
        if !map.is_empty() {
            return Err(Error::Invalid(
                "checkpoint holds tensors the model does not expect".into(),
            ));
        }
        Ok(())
    }

    /// One optimizer step on a batch; returns the batch MSE.
    fn train_step(&mut self, x: &Matrix, labels: &Matrix, opt: &mut AdamW) -> f64 {
        let n = labels.len() as f64;
        match self {
            Learner::Mlp(m) => {
                let (preds, cache) = m.forward(x);
                let diff = preds.sub(labels);
                let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / n;
                let grads = m.backward(&cache, &diff.scale(2.0 / n));
                opt.step(&mut m.params_mut(), &grads);
                loss
            }
            Learner::Adnn(m) => {
                let (preds, cache) = m.forward(x);
                let diff = preds.sub(labels);
                let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / n;
                let grads = m.backward(&cache, &diff.scale(2.0 / n));
                opt.step(&mut m.params_mut(), &grads);
                adnn_absorb(m, &cache);
                loss
            }
            Learner::Gru(m) => {
                let (preds, cache) = m.forward(x);
                let diff = preds.sub(labels);
                let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / n;
                let grads = m.backward(&cache, &diff.scale(2.0 / n));
                opt.step(&mut m.params_mut(), &grads);
                loss
            }
            Learner::Lstm(m) => {
                let (preds, cache) = m.forward(x);
                let diff = preds.sub(labels);
                let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / n;
                let grads = m.backward(&cache, &diff.scale(2.0 / n));
                opt.step(&mut m.params_mut(), &grads);
                loss
            }
        }
    }
}

fn adnn_absorb(m: &mut Adnn, cache: &AdnnCache) {
    m.update_running_stats(cache);
}

/// Builds the window matrix (one sample per row) for a batch.
pub fn windows_matrix(samples: &[PredictionSample]) -> Matrix {
    assert!(!samples.is_empty());
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.window.clone()).collect();
    Matrix::from_rows(&rows)
}

fn labels_matrix(samples: &[PredictionSample]) -> Matrix {
    Matrix::col_vector(&samples.iter().map(|s| s.label).collect::<Vec<f64>>())
}

/// Minibatch MSE training with AdamW; returns the per-epoch training loss
/// curve. A non-finite loss aborts with the offending epoch.
pub fn train(
    learner: &mut Learner,
    samples: &[PredictionSample],
    learning_rate: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut opt = AdamW::new(learning_rate, cfg.weight_decay);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let batch = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            let mut r = rng::stream(&[seed, epoch as u64 + 1]);
            order.shuffle(&mut r);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(batch) {
            let subset: Vec<PredictionSample> =
                chunk.iter().map(|&i| samples[i].clone()).collect();
            let x = windows_matrix(&subset);
            let y = labels_matrix(&subset);
            let loss = learner.train_step(&x, &y, &mut opt);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss;
            batches += 1.0;
        }
        curve.push(epoch_loss / batches);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PredictionSample;

    fn constant_zero_samples(n: usize, n_s: usize) -> Vec<PredictionSample> {
        (0..n)
            .map(|i| PredictionSample {
                window: (0..n_s).map(|j| ((i + j) % 7) as f64 / 7.0).collect(),
                label: 0.0,
                start: i,
            })
            .collect()
    }

    #[test]
    fn mlp_reaches_tiny_loss_on_constant_zero_targets() {
        let schema = Schema::mlp_desk();
        let strategy = schema
            .strategy_from_values(&[6.0, 0.01, 1.0, 8.0])
            .unwrap();
        let mut learner = Learner::build(&schema, &strategy, 5).unwrap();
        let samples = constant_zero_samples(64, 6);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 16,
            weight_decay: 0.0,
            shuffle: true,
        };
        let curve = train(&mut learner, &samples, 0.01, &cfg, 5).unwrap();
        assert_eq!(curve.len(), 50);
        assert!(
            *curve.last().unwrap() < 1e-6,
            "final loss {}",
            curve.last().unwrap()
        );
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let schema = Schema::mlp_desk();
        let strategy = schema
            .strategy_from_values(&[6.0, 0.01, 2.0, 8.0])
            .unwrap();
        let mut learner = Learner::build(&schema, &strategy, 9).unwrap();
        let before = match &learner {
            Learner::Mlp(m) => m.params().iter().map(|p| (*p).clone()).collect::<Vec<_>>(),
            _ => unreachable!(),
        };
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let curve = train(&mut learner, &constant_zero_samples(10, 6), 0.01, &cfg, 9).unwrap();
        assert!(curve.is_empty());
        let after = match &learner {
            Learner::Mlp(m) => m.params().iter().map(|p| (*p).clone()).collect::<Vec<_>>(),
            _ => unreachable!(),
        };
        assert_eq!(before, after);
    }

    #[test]
    fn divergence_reports_the_offending_epoch() {
        let schema = Schema::new(
            crate::learner::ModelKind::Mlp,
            vec![
                crate::learner::GeneDef::linear("n_s", &[6.0]),
                crate::learner::GeneDef::log10("c", &[1e300]),
                crate::learner::GeneDef::linear("layers", &[2.0]),
                crate::learner::GeneDef::linear("neure", &[8.0]),
            ],
        )
        .unwrap();
        let strategy = schema.strategy_at(0).clone();
        let mut learner = Learner::build(&schema, &strategy, 2).unwrap();
        // An absurd learning rate drives the weights to infinity and the
        // loss to NaN within a few steps.
        let err = train(
            &mut learner,
            &constant_zero_samples(30, 6),
            1e300,
            &TrainConfig {
                epochs: 10,
                batch_size: 8,
                weight_decay: 0.0,
                shuffle: true,
            },
            2,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "got {err:?}");
    }

    #[test]
    fn training_is_deterministic_for_fixed_seed() {
        let schema = Schema::mlp_desk();
        let strategy = schema
            .strategy_from_values(&[6.0, 0.001, 2.0, 8.0])
            .unwrap();
        let samples = constant_zero_samples(40, 6);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            weight_decay: 0.01,
            shuffle: true,
        };
        let mut a = Learner::build(&schema, &strategy, 3).unwrap();
        let mut b = Learner::build(&schema, &strategy, 3).unwrap();
        let ca = train(&mut a, &samples, 0.001, &cfg, 3).unwrap();
        let cb = train(&mut b, &samples, 0.001, &cfg, 3).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn adnn_builds_and_trains_a_few_steps() {
        let schema = Schema::adnn_desk();
        let strategy = schema
            .strategy_from_values(&[6.0, 0.01, 1.0, 2.0, 8.0])
            .unwrap();
        let mut learner = Learner::build(&schema, &strategy, 11).unwrap();
        let samples = constant_zero_samples(24, 6);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 12,
            weight_decay: 0.0,
            shuffle: false,
        };
        let curve = train(&mut learner, &samples, 0.01, &cfg, 11).unwrap();
        assert_eq!(curve.len(), 2);
        assert!(curve.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn checkpoint_round_trips_including_norm_state() {
        let schema = Schema::adnn_desk();
        let strategy = schema
            .strategy_from_values(&[6.0, 0.01, 1.0, 2.0, 8.0])
            .unwrap();
        let mut learner = Learner::build(&schema, &strategy, 21).unwrap();
        // A couple of steps so running statistics move off their defaults.
        let samples = constant_zero_samples(24, 6);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 12,
            weight_decay: 0.0,
            shuffle: false,
        };
        train(&mut learner, &samples, 0.01, &cfg, 21).unwrap();

        let dir = std::env::temp_dir().join("hypercast_learner_ckpt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        learner.save(&path).unwrap();

        let mut other = Learner::build(&schema, &strategy, 99).unwrap();
        other.load_into(&path).unwrap();
        let preds_a = learner.predict_samples(&samples);
        let preds_b = other.predict_samples(&samples);
        assert_eq!(preds_a, preds_b);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn gru_and_lstm_build_and_predict() {
        for (schema, values) in [
            (Schema::gru_full(), vec![6.0, 0.001, 2.0, 256.0]),
            (Schema::lstm_full(), vec![6.0, 0.001, 2.0, 32.0]),
        ] {
            let strategy = schema.strategy_from_values(&values).unwrap();
            let learner = Learner::build(&schema, &strategy, 13).unwrap();
            let samples = constant_zero_samples(4, 6);
            let preds = learner.predict_samples(&samples);
            assert_eq!(preds.len(), 4);
            assert!(preds.iter().all(|p| p.is_finite()));
        }
    }
}
