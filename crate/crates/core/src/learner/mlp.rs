//! Feed-forward base learner: the window feeds a stack of ReLU hidden
//! layers and a single linear output neuron.

use rand_chacha::ChaCha8Rng;

use crate::tensor::layers::{accumulate_n, Dense, DenseCache, Tunable};
use crate::tensor::{Activation, Matrix};

#[derive(Debug, Clone)]
pub struct Mlp {
    pub n_s: usize,
    hidden: Vec<Dense>,
    out: Dense,
}

pub struct MlpCache {
    hidden: Vec<DenseCache>,
    out: DenseCache,
}

impl Mlp {
    pub fn new(n_s: usize, layers: usize, neure: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut hidden = Vec::with_capacity(layers);
        let mut width = n_s;
        for _ in 0..layers {
            hidden.push(Dense::new(width, neure, Activation::Relu, rng));
            width = neure;
        }
        let out = Dense::new(width, 1, Activation::Linear, rng);
        Mlp { n_s, hidden, out }
    }

    /// Batch forward; `x` is one window per row.
    pub fn forward(&self, x: &Matrix) -> (Matrix, MlpCache) {
        let mut caches = Vec::with_capacity(self.hidden.len());
        let mut state = x.clone();
        for layer in &self.hidden {
            let (y, c) = layer.forward(&state);
            caches.push(c);
            state = y;
        }
        let (preds, out_cache) = self.out.forward(&state);
        (
            preds,
            MlpCache {
                hidden: caches,
                out: out_cache,
            },
        )
    }

    pub fn infer(&self, x: &Matrix) -> Matrix {
        let mut state = x.clone();
        for layer in &self.hidden {
            state = layer.infer(&state);
        }
        self.out.infer(&state)
    }

    /// Gradients in [`Tunable::params`] order given dL/dpred.
    pub fn backward(&self, cache: &MlpCache, dpred: &Matrix) -> Vec<Matrix> {
        let mut grads = self.zeroed_grads();
        let (mut dstate, out_grads) = self.out.backward(&cache.out, dpred);
        let out_offset = self.hidden.len() * 2;
        accumulate_n(&mut grads, out_offset, out_grads);
        for (i, layer) in self.hidden.iter().enumerate().rev() {
            let (dx, layer_grads) = layer.backward(&cache.hidden[i], &dstate);
            accumulate_n(&mut grads, i * 2, layer_grads);
            dstate = dx;
        }
        grads
    }
}

impl Tunable for Mlp {
    fn params(&self) -> Vec<&Matrix> {
        let mut p: Vec<&Matrix> = self.hidden.iter().flat_map(|l| l.params()).collect();
        p.extend(self.out.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p: Vec<&mut Matrix> = self
            .hidden
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect();
        p.push(&mut self.out.w);
        p.push(&mut self.out.b);
        p
    }
}
