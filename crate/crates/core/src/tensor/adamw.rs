//! AdamW with decoupled weight decay.

use super::Matrix;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// Optimizer state: first/second-moment accumulators per parameter.
///
/// Owned by a single trainer; moment buffers are allocated lazily on the
/// first step and must keep matching the parameter shapes afterwards.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            learning_rate,
            weight_decay,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPS,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update: decoupled decay `w ← w(1 − lr·λ)` applied separately from
    /// the bias-corrected moment step.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) {
        assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
        if self.m.is_empty() {
            self.m = grads
                .iter()
                .map(|g| Matrix::zeros(g.rows(), g.cols()))
                .collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer bound to other model");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            debug_assert_eq!((p.rows(), p.cols()), (g.rows(), g.cols()));
            let pw = p.as_mut_slice();
            let gw = g.as_slice();
            let mw = m.as_mut_slice();
            let vw = v.as_mut_slice();
            for i in 0..pw.len() {
                mw[i] = self.beta1 * mw[i] + (1.0 - self.beta1) * gw[i];
                vw[i] = self.beta2 * vw[i] + (1.0 - self.beta2) * gw[i] * gw[i];
                let m_hat = mw[i] / bc1;
                let v_hat = vw[i] / bc2;
                pw[i] -= self.learning_rate * self.weight_decay * pw[i];
                pw[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}
