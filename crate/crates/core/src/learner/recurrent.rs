//! Recurrent base learners (stacked GRU / LSTM) with exact
//! backpropagation through time.
//!
//! Input windows are scalar sequences: step `t` of a batch is the t-th
//! column of the window matrix. The last hidden state of the top layer feeds
//! a single linear output neuron.

use rand_chacha::ChaCha8Rng;

use crate::tensor::layers::{accumulate_n, Dense, DenseCache, Tunable};
use crate::tensor::{hcat, hsplit, sigmoid, Activation, Matrix};

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LstmCell {
    in_dim: usize,
    hidden: usize,
    wf: Matrix,
    bf: Matrix,
    wi: Matrix,
    bi: Matrix,
    wc: Matrix,
    bc: Matrix,
    wo: Matrix,
    bo: Matrix,
}

struct LstmStep {
    comb: Matrix,
    f: Matrix,
    i: Matrix,
    g: Matrix,
    o: Matrix,
    c_prev: Matrix,
    tanh_c: Matrix,
}

pub struct LstmSeqCache {
    steps: Vec<LstmStep>,
}

impl LstmCell {
    pub fn new(in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let total = in_dim + hidden;
        let std = (2.0 / (total + hidden) as f64).sqrt();
        let w = |rng: &mut ChaCha8Rng| Matrix::randn(total, hidden, std, rng);
        LstmCell {
            in_dim,
            hidden,
            wf: w(rng),
            // Forget gate opens by default, the usual stabilizer.
            bf: Matrix::from_vec(1, hidden, vec![1.0; hidden]),
            wi: w(rng),
            bi: Matrix::zeros(1, hidden),
            wc: w(rng),
            bc: Matrix::zeros(1, hidden),
            wo: w(rng),
            bo: Matrix::zeros(1, hidden),
        }
    }

    pub fn forward_seq(&self, inputs: &[Matrix]) -> (Vec<Matrix>, LstmSeqCache) {
        let batch = inputs[0].rows();
        let mut h = Matrix::zeros(batch, self.hidden);
        let mut c = Matrix::zeros(batch, self.hidden);
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            let comb = hcat(x, &h);
            let f = comb.matmul(&self.wf).add_row_broadcast(&self.bf).map(sigmoid);
            let i = comb.matmul(&self.wi).add_row_broadcast(&self.bi).map(sigmoid);
            let g = comb
                .matmul(&self.wc)
                .add_row_broadcast(&self.bc)
                .map(f64::tanh);
            let o = comb.matmul(&self.wo).add_row_broadcast(&self.bo).map(sigmoid);
            let c_new = f.hadamard(&c).add(&i.hadamard(&g));
            let tanh_c = c_new.map(f64::tanh);
            let h_new = o.hadamard(&tanh_c);
            steps.push(LstmStep {
                comb,
                f,
                i,
                g,
                o,
                c_prev: c,
                tanh_c,
            });
            c = c_new;
            h = h_new.clone();
            outputs.push(h_new);
        }
        (outputs, LstmSeqCache { steps })
    }

    /// BPTT over the whole sequence. `dh_seq[t]` is the upstream gradient on
    /// the step-t hidden output; returns per-step input gradients plus
    /// parameter gradients in params order.
    pub fn backward_seq(
        &self,
        cache: &LstmSeqCache,
        dh_seq: &[Matrix],
    ) -> (Vec<Matrix>, Vec<Matrix>) {
        let steps = &cache.steps;
        let batch = steps[0].comb.rows();
        let mut grads = self.zeroed_grads();
        let mut dx_seq = vec![Matrix::zeros(batch, self.in_dim); steps.len()];
        let mut dh_next = Matrix::zeros(batch, self.hidden);
        let mut dc_next = Matrix::zeros(batch, self.hidden);
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            let dh = dh_seq[t].add(&dh_next);
            let do_ = dh.hadamard(&s.tanh_c);
            let dzo = do_.hadamard(&s.o).hadamard(&s.o.map(|v| 1.0 - v));
            let dc = dc_next.add(&dh.hadamard(&s.o).hadamard(&s.tanh_c.map(|v| 1.0 - v * v)));
            let df = dc.hadamard(&s.c_prev);
            let dzf = df.hadamard(&s.f).hadamard(&s.f.map(|v| 1.0 - v));
            let di = dc.hadamard(&s.g);
            let dzi = di.hadamard(&s.i).hadamard(&s.i.map(|v| 1.0 - v));
            let dg = dc.hadamard(&s.i);
            let dzc = dg.hadamard(&s.g.map(|v| 1.0 - v * v));
            dc_next = dc.hadamard(&s.f);

            let comb_t = s.comb.transpose();
            accumulate_n(
                &mut grads,
                0,
                vec![comb_t.matmul(&dzf), dzf.col_sum()],
            );
            accumulate_n(
                &mut grads,
                2,
                vec![comb_t.matmul(&dzi), dzi.col_sum()],
            );
            accumulate_n(
                &mut grads,
                4,
                vec![comb_t.matmul(&dzc), dzc.col_sum()],
            );
            accumulate_n(
                &mut grads,
                6,
                vec![comb_t.matmul(&dzo), dzo.col_sum()],
            );

            let dcomb = dzf
                .matmul(&self.wf.transpose())
                .add(&dzi.matmul(&self.wi.transpose()))
                .add(&dzc.matmul(&self.wc.transpose()))
                .add(&dzo.matmul(&self.wo.transpose()));
            let (dx, dh_prev) = hsplit(&dcomb, self.in_dim);
            dx_seq[t] = dx;
            dh_next = dh_prev;
        }
        (dx_seq, grads)
    }
}

impl Tunable for LstmCell {
    fn params(&self) -> Vec<&Matrix> {
        vec![
            &self.wf, &self.bf, &self.wi, &self.bi, &self.wc, &self.bc, &self.wo, &self.bo,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.wf,
            &mut self.bf,
            &mut self.wi,
            &mut self.bi,
            &mut self.wc,
            &mut self.bc,
            &mut self.wo,
            &mut self.bo,
        ]
    }
}

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GruCell {
    in_dim: usize,
    hidden: usize,
    wz: Matrix,
    bz: Matrix,
    wr: Matrix,
    br: Matrix,
    wh: Matrix,
    bh: Matrix,
}

struct GruStep {
    comb: Matrix,
    comb_reset: Matrix,
    z: Matrix,
    r: Matrix,
    hc: Matrix,
    h_prev: Matrix,
}

pub struct GruSeqCache {
    steps: Vec<GruStep>,
}

impl GruCell {
    pub fn new(in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let total = in_dim + hidden;
        let std = (2.0 / (total + hidden) as f64).sqrt();
        let w = |rng: &mut ChaCha8Rng| Matrix::randn(total, hidden, std, rng);
        GruCell {
            in_dim,
            hidden,
            wz: w(rng),
            bz: Matrix::zeros(1, hidden),
            wr: w(rng),
            br: Matrix::zeros(1, hidden),
            wh: w(rng),
            bh: Matrix::zeros(1, hidden),
        }
    }

    pub fn forward_seq(&self, inputs: &[Matrix]) -> (Vec<Matrix>, GruSeqCache) {
        let batch = inputs[0].rows();
        let mut h = Matrix::zeros(batch, self.hidden);
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            let comb = hcat(x, &h);
            let z = comb.matmul(&self.wz).add_row_broadcast(&self.bz).map(sigmoid);
            let r = comb.matmul(&self.wr).add_row_broadcast(&self.br).map(sigmoid);
            let comb_reset = hcat(x, &r.hadamard(&h));
            let hc = comb_reset
                .matmul(&self.wh)
                .add_row_broadcast(&self.bh)
                .map(f64::tanh);
            let h_new = z
                .map(|v| 1.0 - v)
                .hadamard(&h)
                .add(&z.hadamard(&hc));
            steps.push(GruStep {
                comb,
                comb_reset,
                z,
                r,
                hc,
                h_prev: h,
            });
            h = h_new.clone();
            outputs.push(h_new);
        }
        (outputs, GruSeqCache { steps })
    }

    pub fn backward_seq(
        &self,
        cache: &GruSeqCache,
        dh_seq: &[Matrix],
    ) -> (Vec<Matrix>, Vec<Matrix>) {
        let steps = &cache.steps;
        let batch = steps[0].comb.rows();
        let mut grads = self.zeroed_grads();
        let mut dx_seq = vec![Matrix::zeros(batch, self.in_dim); steps.len()];
        let mut dh_next = Matrix::zeros(batch, self.hidden);
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            let dh = dh_seq[t].add(&dh_next);
            let dz = dh.hadamard(&s.hc.sub(&s.h_prev));
            let dzz = dz.hadamard(&s.z).hadamard(&s.z.map(|v| 1.0 - v));
            let dhc = dh.hadamard(&s.z);
            let dzh = dhc.hadamard(&s.hc.map(|v| 1.0 - v * v));

            accumulate_n(
                &mut grads,
                0,
                vec![s.comb.transpose().matmul(&dzz), dzz.col_sum()],
            );
            accumulate_n(
                &mut grads,
                4,
                vec![s.comb_reset.transpose().matmul(&dzh), dzh.col_sum()],
            );

            let dcomb_reset = dzh.matmul(&self.wh.transpose());
            let (dx_h, drh) = hsplit(&dcomb_reset, self.in_dim);
            let dr = drh.hadamard(&s.h_prev);
            let dzr = dr.hadamard(&s.r).hadamard(&s.r.map(|v| 1.0 - v));
            accumulate_n(
                &mut grads,
                2,
                vec![s.comb.transpose().matmul(&dzr), dzr.col_sum()],
            );

            let dcomb = dzz
                .matmul(&self.wz.transpose())
                .add(&dzr.matmul(&self.wr.transpose()));
            let (dx_g, dh_gates) = hsplit(&dcomb, self.in_dim);
            dx_seq[t] = dx_h.add(&dx_g);
            dh_next = dh
                .hadamard(&s.z.map(|v| 1.0 - v))
                .add(&drh.hadamard(&s.r))
                .add(&dh_gates);
        }
        (dx_seq, grads)
    }
}

impl Tunable for GruCell {
    fn params(&self) -> Vec<&Matrix> {
        vec![&self.wz, &self.bz, &self.wr, &self.br, &self.wh, &self.bh]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.wz,
            &mut self.bz,
            &mut self.wr,
            &mut self.br,
            &mut self.wh,
            &mut self.bh,
        ]
    }
}

// ---------------------------------------------------------------------------
// Stacked models
// ---------------------------------------------------------------------------

macro_rules! stacked_recurrent {
    ($model:ident, $cell:ident, $seq_cache:ident, $cache:ident) => {
        #[derive(Debug, Clone)]
        pub struct $model {
            pub n_s: usize,
            cells: Vec<$cell>,
            head: Dense,
        }

        pub struct $cache {
            layer_caches: Vec<$seq_cache>,
            /// Hidden sequences feeding each layer above the first.
            head_cache: DenseCache,
            steps: usize,
            batch: usize,
        }

        impl $model {
            pub fn new(n_s: usize, layers: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
                assert!(layers >= 1);
                let mut cells = Vec::with_capacity(layers);
                cells.push($cell::new(1, hidden, rng));
                for _ in 1..layers {
                    cells.push($cell::new(hidden, hidden, rng));
                }
                let head = Dense::new(hidden, 1, Activation::Linear, rng);
                $model { n_s, cells, head }
            }

            fn columns(x: &Matrix) -> Vec<Matrix> {
                (0..x.cols())
                    .map(|t| {
                        let col: Vec<f64> = (0..x.rows()).map(|r| x[(r, t)]).collect();
                        Matrix::col_vector(&col)
                    })
                    .collect()
            }

            pub fn forward(&self, x: &Matrix) -> (Matrix, $cache) {
                assert_eq!(x.cols(), self.n_s, "window length mismatch");
                let mut seq = Self::columns(x);
                let mut layer_caches = Vec::with_capacity(self.cells.len());
                for cell in &self.cells {
                    let (out, cache) = cell.forward_seq(&seq);
                    layer_caches.push(cache);
                    seq = out;
                }
                let (preds, head_cache) = self.head.forward(seq.last().unwrap());
                (
                    preds,
                    $cache {
                        layer_caches,
                        head_cache,
                        steps: x.cols(),
                        batch: x.rows(),
                    },
                )
            }

            pub fn infer(&self, x: &Matrix) -> Matrix {
                self.forward(x).0
            }

            pub fn backward(&self, cache: &$cache, dpred: &Matrix) -> Vec<Matrix> {
                let mut grads = self.zeroed_grads();
                let (dh_last, head_grads) = self.head.backward(&cache.head_cache, dpred);
                let cell_params: usize = self.cells.iter().map(|c| c.params().len()).sum();
                accumulate_n(&mut grads, cell_params, head_grads);
                let hidden = dh_last.cols();
                // Upstream gradient per step for the top layer: only the
                // final step feeds the head.
                let mut dh_seq = vec![Matrix::zeros(cache.batch, hidden); cache.steps];
                *dh_seq.last_mut().unwrap() = dh_last;
                let mut offset = cell_params;
                for (li, cell) in self.cells.iter().enumerate().rev() {
                    offset -= cell.params().len();
                    let (dx_seq, cell_grads) =
                        cell.backward_seq(&cache.layer_caches[li], &dh_seq);
                    accumulate_n(&mut grads, offset, cell_grads);
                    dh_seq = dx_seq;
                }
                grads
            }
        }

        impl Tunable for $model {
            fn params(&self) -> Vec<&Matrix> {
                let mut p: Vec<&Matrix> =
                    self.cells.iter().flat_map(|c| c.params()).collect();
                p.extend(self.head.params());
                p
            }

            fn params_mut(&mut self) -> Vec<&mut Matrix> {
                let mut p: Vec<&mut Matrix> = self
                    .cells
                    .iter_mut()
                    .flat_map(|c| c.params_mut())
                    .collect();
                p.push(&mut self.head.w);
                p.push(&mut self.head.b);
                p
            }
        }
    };
}

stacked_recurrent!(Lstm, LstmCell, LstmSeqCache, LstmCache);
stacked_recurrent!(Gru, GruCell, GruSeqCache, GruCache);
