//! Differentiable layer primitives.
//!
//! Each layer is a plain struct of parameter matrices with a pure
//! `forward(&self, ..) -> (output, cache)` and a matching
//! `backward(&self, cache, d_output)` that returns the input gradient plus
//! parameter gradients in [`Tunable::params`] order. The layer set is closed,
//! so gradients are hand-derived per layer instead of taped.

use super::{activate, sigmoid, softmax_rows, softmax_rows_backward, Activation, Matrix};
use rand_chacha::ChaCha8Rng;

/// Epsilon in the layer-norm variance denominator.
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Epsilon in the batch-norm variance denominator.
pub const BATCH_NORM_EPS: f64 = 1e-5;
/// Momentum for batch-norm running statistics.
pub const BATCH_NORM_MOMENTUM: f64 = 0.9;

/// Anything with an ordered list of trainable parameter matrices.
///
/// `params` and `params_mut` must yield the same order, and every gradient
/// vector produced by a `backward` follows it too.
pub trait Tunable {
    fn params(&self) -> Vec<&Matrix>;
    fn params_mut(&mut self) -> Vec<&mut Matrix>;

    fn zeroed_grads(&self) -> Vec<Matrix> {
        self.params()
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect()
    }

    /// Total number of scalar parameters.
    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Adds `src` gradients into `acc[start..]`, returning `start + src.len()`
/// so chained layers can carve up one flat accumulator.
pub fn accumulate_n(acc: &mut [Matrix], start: usize, src: Vec<Matrix>) -> usize {
    let n = src.len();
    for (i, g) in src.into_iter().enumerate() {
        let a = &mut acc[start + i];
        debug_assert_eq!((a.rows(), a.cols()), (g.rows(), g.cols()));
        for (av, gv) in a.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *av += gv;
        }
    }
    start + n
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// Fully-connected layer `y = act(x·w + b)`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Matrix,
    pub b: Matrix,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    x: Matrix,
    z: Matrix,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, act: Activation, rng: &mut ChaCha8Rng) -> Self {
        // He initialization for rectifiers, Xavier otherwise.
        let std = match act {
            Activation::Relu | Activation::Elu => (2.0 / in_dim as f64).sqrt(),
            _ => (2.0 / (in_dim + out_dim) as f64).sqrt(),
        };
        Dense {
            w: Matrix::randn(in_dim, out_dim, std, rng),
            b: Matrix::zeros(1, out_dim),
            act,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, DenseCache) {
        let z = x.matmul(&self.w).add_row_broadcast(&self.b);
        let y = activate(&z, self.act);
        (y, DenseCache { x: x.clone(), z })
    }

    /// Forward without retaining a cache.
    pub fn infer(&self, x: &Matrix) -> Matrix {
        activate(&x.matmul(&self.w).add_row_broadcast(&self.b), self.act)
    }

    /// Returns `(dx, [dw, db])`.
    pub fn backward(&self, cache: &DenseCache, dy: &Matrix) -> (Matrix, Vec<Matrix>) {
        let dz = dy.zip_with_act(&cache.z, self.act);
        let dw = cache.x.transpose().matmul(&dz);
        let db = dz.col_sum();
        let dx = dz.matmul(&self.w.transpose());
        (dx, vec![dw, db])
    }
}

impl Matrix {
    fn zip_with_act(&self, z: &Matrix, act: Activation) -> Matrix {
        assert_eq!((self.rows(), self.cols()), (z.rows(), z.cols()));
        let data = self
            .as_slice()
            .iter()
            .zip(z.as_slice())
            .map(|(&d, &zv)| d * act.derivative(zv))
            .collect();
        Matrix::from_vec(self.rows(), self.cols(), data)
    }
}

impl Tunable for Dense {
    fn params(&self) -> Vec<&Matrix> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w, &mut self.b]
    }
}

// ---------------------------------------------------------------------------
// Layer normalization
// ---------------------------------------------------------------------------

/// Per-row normalization to zero mean / unit variance, then affine gain+bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Matrix,
    pub bias: Matrix,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    x: Matrix,
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gain: Matrix::from_vec(1, dim, vec![1.0; dim]),
            bias: Matrix::zeros(1, dim),
        }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, LayerNormCache) {
        let d = x.cols() as f64;
        let mut out = Matrix::zeros(x.rows(), x.cols());
        let mut means = Vec::with_capacity(x.rows());
        let mut inv_stds = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for c in 0..x.cols() {
                out[(r, c)] = self.gain[(0, c)] * (row[c] - mean) * inv_std + self.bias[(0, c)];
            }
            means.push(mean);
            inv_stds.push(inv_std);
        }
        (
            out,
            LayerNormCache {
                x: x.clone(),
                mean: means,
                inv_std: inv_stds,
            },
        )
    }

    pub fn infer(&self, x: &Matrix) -> Matrix {
        self.forward(x).0
    }

    /// Returns `(dx, [dgain, dbias])`.
    pub fn backward(&self, cache: &LayerNormCache, dy: &Matrix) -> (Matrix, Vec<Matrix>) {
        let x = &cache.x;
        let d = x.cols();
        let df = d as f64;
        let mut dx = Matrix::zeros(x.rows(), d);
        let mut dgain = Matrix::zeros(1, d);
        let mut dbias = Matrix::zeros(1, d);
        for r in 0..x.rows() {
            let mean = cache.mean[r];
            let inv_std = cache.inv_std[r];
            let row = x.row(r);
            let dyr = dy.row(r);
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            let mut xhat = vec![0.0; d];
            let mut dxhat = vec![0.0; d];
            for c in 0..d {
                xhat[c] = (row[c] - mean) * inv_std;
                dxhat[c] = dyr[c] * self.gain[(0, c)];
                dgain[(0, c)] += dyr[c] * xhat[c];
                dbias[(0, c)] += dyr[c];
                sum_dxhat += dxhat[c];
                sum_dxhat_xhat += dxhat[c] * xhat[c];
            }
            for c in 0..d {
                dx[(r, c)] =
                    inv_std / df * (df * dxhat[c] - sum_dxhat - xhat[c] * sum_dxhat_xhat);
            }
        }
        (dx, vec![dgain, dbias])
    }
}

/// One-shot layer norm of a vector, the operation-level entry point.
pub fn layer_norm_vector(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), gain.len());
    assert_eq!(x.len(), bias.len());
    let ln = LayerNorm {
        gain: Matrix::row_vector(gain),
        bias: Matrix::row_vector(bias),
    };
    ln.infer(&Matrix::row_vector(x)).as_slice().to_vec()
}

impl Tunable for LayerNorm {
    fn params(&self) -> Vec<&Matrix> {
        vec![&self.gain, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.gain, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// Per-column normalization over the rows of a batch.
///
/// `forward_train` is pure; callers fold the returned batch statistics into
/// the running estimates via [`BatchNorm::update_running`] after the step.
/// Inference normalizes with the running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gain: Matrix,
    pub bias: Matrix,
    pub running_mean: Matrix,
    pub running_var: Matrix,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    x: Matrix,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gain: Matrix::from_vec(1, dim, vec![1.0; dim]),
            bias: Matrix::zeros(1, dim),
            running_mean: Matrix::zeros(1, dim),
            running_var: Matrix::from_vec(1, dim, vec![1.0; dim]),
        }
    }

    pub fn forward_train(&self, x: &Matrix) -> (Matrix, BatchNormCache) {
        let n = x.rows() as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for r in 0..x.rows() {
            for (c, &v) in x.row(r).iter().enumerate() {
                mean[c] += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        for r in 0..x.rows() {
            for (c, &v) in x.row(r).iter().enumerate() {
                var[c] += (v - mean[c]) * (v - mean[c]);
            }
        }
        for v in var.iter_mut() {
            *v /= n;
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BATCH_NORM_EPS).sqrt()).collect();
        let mut out = Matrix::zeros(x.rows(), d);
        for r in 0..x.rows() {
            for c in 0..d {
                out[(r, c)] =
                    self.gain[(0, c)] * (x[(r, c)] - mean[c]) * inv_std[c] + self.bias[(0, c)];
            }
        }
        (
            out,
            BatchNormCache {
                x: x.clone(),
                mean,
                var,
                inv_std,
            },
        )
    }

    pub fn forward_infer(&self, x: &Matrix) -> Matrix {
        let d = x.cols();
        let mut out = Matrix::zeros(x.rows(), d);
        for r in 0..x.rows() {
            for c in 0..d {
                let inv = 1.0 / (self.running_var[(0, c)] + BATCH_NORM_EPS).sqrt();
                out[(r, c)] = self.gain[(0, c)] * (x[(r, c)] - self.running_mean[(0, c)]) * inv
                    + self.bias[(0, c)];
            }
        }
        out
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        let m = BATCH_NORM_MOMENTUM;
        for c in 0..self.running_mean.cols() {
            self.running_mean[(0, c)] = m * self.running_mean[(0, c)] + (1.0 - m) * cache.mean[c];
            self.running_var[(0, c)] = m * self.running_var[(0, c)] + (1.0 - m) * cache.var[c];
        }
    }

    /// Returns `(dx, [dgain, dbias])`, backpropagating through the batch
    /// statistics.
    pub fn backward(&self, cache: &BatchNormCache, dy: &Matrix) -> (Matrix, Vec<Matrix>) {
        let x = &cache.x;
        let n = x.rows();
        let nf = n as f64;
        let d = x.cols();
        let mut dx = Matrix::zeros(n, d);
        let mut dgain = Matrix::zeros(1, d);
        let mut dbias = Matrix::zeros(1, d);
        for c in 0..d {
            let mean = cache.mean[c];
            let inv_std = cache.inv_std[c];
            let g = self.gain[(0, c)];
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_center = 0.0;
            for r in 0..n {
                let dxhat = dy[(r, c)] * g;
                let center = x[(r, c)] - mean;
                dgain[(0, c)] += dy[(r, c)] * center * inv_std;
                dbias[(0, c)] += dy[(r, c)];
                sum_dxhat += dxhat;
                sum_dxhat_center += dxhat * center;
            }
            let dvar = sum_dxhat_center * (-0.5) * inv_std * inv_std * inv_std;
            let dmean = -inv_std * sum_dxhat;
            for r in 0..n {
                let dxhat = dy[(r, c)] * g;
                let center = x[(r, c)] - mean;
                dx[(r, c)] = dxhat * inv_std + dvar * 2.0 * center / nf + dmean / nf;
            }
        }
        (dx, vec![dgain, dbias])
    }
}

impl Tunable for BatchNorm {
    fn params(&self) -> Vec<&Matrix> {
        vec![&self.gain, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.gain, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// Gated linear unit
// ---------------------------------------------------------------------------

/// `GLU(x) = σ(x·wg + bg) ⊙ (x·wv + bv)` — a sigmoid gate Hadamard-multiplied
/// with a linear value path.
#[derive(Debug, Clone)]
pub struct Glu {
    pub wg: Matrix,
    pub bg: Matrix,
    pub wv: Matrix,
    pub bv: Matrix,
}

#[derive(Debug, Clone)]
pub struct GluCache {
    x: Matrix,
    gate: Matrix,
    value: Matrix,
}

impl Glu {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = (2.0 / (in_dim + out_dim) as f64).sqrt();
        Glu {
            wg: Matrix::randn(in_dim, out_dim, std, rng),
            bg: Matrix::zeros(1, out_dim),
            wv: Matrix::randn(in_dim, out_dim, std, rng),
            bv: Matrix::zeros(1, out_dim),
        }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, GluCache) {
        let gate = x
            .matmul(&self.wg)
            .add_row_broadcast(&self.bg)
            .map(sigmoid);
        let value = x.matmul(&self.wv).add_row_broadcast(&self.bv);
        let y = gate.hadamard(&value);
        (
            y,
            GluCache {
                x: x.clone(),
                gate,
                value,
            },
        )
    }

    pub fn infer(&self, x: &Matrix) -> Matrix {
        self.forward(x).0
    }

    /// Returns `(dx, [dwg, dbg, dwv, dbv])`.
    pub fn backward(&self, cache: &GluCache, dy: &Matrix) -> (Matrix, Vec<Matrix>) {
        let dgate = dy.hadamard(&cache.value);
        let dvalue = dy.hadamard(&cache.gate);
        // σ' = σ(1−σ)
        let dzg = dgate.hadamard(&cache.gate.map(|g| 1.0 - g)).hadamard(&cache.gate);
        let dwg = cache.x.transpose().matmul(&dzg);
        let dbg = dzg.col_sum();
        let dwv = cache.x.transpose().matmul(&dvalue);
        let dbv = dvalue.col_sum();
        let dx = dzg
            .matmul(&self.wg.transpose())
            .add(&dvalue.matmul(&self.wv.transpose()));
        (dx, vec![dwg, dbg, dwv, dbv])
    }
}

impl Tunable for Glu {
    fn params(&self) -> Vec<&Matrix> {
        vec![&self.wg, &self.bg, &self.wv, &self.bv]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.wg, &mut self.bg, &mut self.wv, &mut self.bv]
    }
}

// ---------------------------------------------------------------------------
// Gated residual network block
// ---------------------------------------------------------------------------

/// Gated residual unit: `y = LayerNorm(x + GLU(dense_out(ELU(dense_in(x)))))`.
///
/// The residual path fixes input width = output width; widths are lifted by
/// a separate projection before the first block when they differ.
#[derive(Debug, Clone)]
pub struct GrnBlock {
    pub dense_in: Dense,
    pub dense_out: Dense,
    pub glu: Glu,
    pub norm: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct GrnCache {
    in_cache: DenseCache,
    out_cache: DenseCache,
    glu_cache: GluCache,
    norm_cache: LayerNormCache,
}

impl GrnBlock {
    /// `width` is the residual (input/output) width, `hidden` the width of
    /// the ELU-activated intermediate layer.
    pub fn new(width: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        GrnBlock {
            dense_in: Dense::new(width, hidden, Activation::Elu, rng),
            dense_out: Dense::new(hidden, width, Activation::Linear, rng),
            glu: Glu::new(width, width, rng),
            norm: LayerNorm::new(width),
        }
    }

    pub fn width(&self) -> usize {
        self.dense_in.in_dim()
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, GrnCache) {
        let (eta2, in_cache) = self.dense_in.forward(x);
        let (eta1, out_cache) = self.dense_out.forward(&eta2);
        let (gated, glu_cache) = self.glu.forward(&eta1);
        let (y, norm_cache) = self.norm.forward(&x.add(&gated));
        (
            y,
            GrnCache {
                in_cache,
                out_cache,
                glu_cache,
                norm_cache,
            },
        )
    }

    pub fn infer(&self, x: &Matrix) -> Matrix {
        self.forward(x).0
    }

    /// Returns `(dx, grads)` with grads ordered dense_in, dense_out, glu, norm.
    pub fn backward(&self, cache: &GrnCache, dy: &Matrix) -> (Matrix, Vec<Matrix>) {
        let (dsum, norm_grads) = self.norm.backward(&cache.norm_cache, dy);
        let (deta1, glu_grads) = self.glu.backward(&cache.glu_cache, &dsum);
        let (deta2, out_grads) = self.dense_out.backward(&cache.out_cache, &deta1);
        let (dx_path, in_grads) = self.dense_in.backward(&cache.in_cache, &deta2);
        let dx = dx_path.add(&dsum);
        let mut grads = in_grads;
        grads.extend(out_grads);
        grads.extend(glu_grads);
        grads.extend(norm_grads);
        (dx, grads)
    }
}

impl Tunable for GrnBlock {
    fn params(&self) -> Vec<&Matrix> {
        let mut p = self.dense_in.params();
        p.extend(self.dense_out.params());
        p.extend(self.glu.params());
        p.extend(self.norm.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = vec![&mut self.dense_in.w, &mut self.dense_in.b];
        p.push(&mut self.dense_out.w);
        p.push(&mut self.dense_out.b);
        p.extend(self.glu.params_mut());
        p.extend(self.norm.params_mut());
        p
    }
}

// ---------------------------------------------------------------------------
// Scaled dot-product attention
// ---------------------------------------------------------------------------

/// One attention head. Key and value projections read from `kv_src`, the
/// query projection from `q_src` (identical for self-attention).
#[derive(Debug, Clone)]
pub struct AttentionHead {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    q_src: Matrix,
    kv_src: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    attn: Matrix,
}

impl AttentionHead {
    pub fn new(d_model: usize, d_head: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = (2.0 / (d_model + d_head) as f64).sqrt();
        AttentionHead {
            wq: Matrix::randn(d_model, d_head, std, rng),
            wk: Matrix::randn(d_model, d_head, std, rng),
            wv: Matrix::randn(d_model, d_head, std, rng),
        }
    }

    pub fn d_head(&self) -> usize {
        self.wq.cols()
    }

    pub fn forward(&self, q_src: &Matrix, kv_src: &Matrix) -> (Matrix, AttentionCache) {
        let q = q_src.matmul(&self.wq);
        let k = kv_src.matmul(&self.wk);
        let v = kv_src.matmul(&self.wv);
        let scale = 1.0 / (self.d_head() as f64).sqrt();
        let scores = q.matmul(&k.transpose()).scale(scale);
        let attn = softmax_rows(&scores);
        let y = attn.matmul(&v);
        (
            y,
            AttentionCache {
                q_src: q_src.clone(),
                kv_src: kv_src.clone(),
                q,
                k,
                v,
                attn,
            },
        )
    }

    /// Attention weights for inspection (rows sum to one).
    pub fn weights(&self, q_src: &Matrix, kv_src: &Matrix) -> Matrix {
        self.forward(q_src, kv_src).1.attn
    }

    /// Returns `(dq_src, dkv_src, [dwq, dwk, dwv])`.
    pub fn backward(
        &self,
        cache: &AttentionCache,
        dy: &Matrix,
    ) -> (Matrix, Matrix, Vec<Matrix>) {
        let scale = 1.0 / (self.d_head() as f64).sqrt();
        let dattn = dy.matmul(&cache.v.transpose());
        let dv = cache.attn.transpose().matmul(dy);
        let dscores = softmax_rows_backward(&cache.attn, &dattn).scale(scale);
        let dq = dscores.matmul(&cache.k);
        let dk = dscores.transpose().matmul(&cache.q);
        let dwq = cache.q_src.transpose().matmul(&dq);
        let dwk = cache.kv_src.transpose().matmul(&dk);
        let dwv = cache.kv_src.transpose().matmul(&dv);
        let dq_src = dq.matmul(&self.wq.transpose());
        let dkv_src = dk
            .matmul(&self.wk.transpose())
            .add(&dv.matmul(&self.wv.transpose()));
        (dq_src, dkv_src, vec![dwq, dwk, dwv])
    }
}

impl Tunable for AttentionHead {
    fn params(&self) -> Vec<&Matrix> {
        vec![&self.wq, &self.wk, &self.wv]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.wq, &mut self.wk, &mut self.wv]
    }
}

/// Multi-head attention: heads run in parallel on d_model/h-wide slices and
/// their concatenated outputs pass through a linear projection.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub heads: Vec<AttentionHead>,
    pub proj: Dense,
}

#[derive(Debug, Clone)]
pub struct MultiHeadCache {
    head_caches: Vec<AttentionCache>,
    proj_cache: DenseCache,
}

impl MultiHeadAttention {
    pub fn new(d_model: usize, n_heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(
            n_heads > 0 && d_model % n_heads == 0,
            "head count {} must divide model width {}",
            n_heads,
            d_model
        );
        let d_head = d_model / n_heads;
        MultiHeadAttention {
            heads: (0..n_heads)
                .map(|_| AttentionHead::new(d_model, d_head, rng))
                .collect(),
            proj: Dense::new(d_model, d_model, Activation::Linear, rng),
        }
    }

    pub fn forward(&self, q_src: &Matrix, kv_src: &Matrix) -> (Matrix, MultiHeadCache) {
        let n = q_src.rows();
        let d_head = self.heads[0].d_head();
        let d_model = d_head * self.heads.len();
        let mut concat = Matrix::zeros(n, d_model);
        let mut head_caches = Vec::with_capacity(self.heads.len());
        for (h, head) in self.heads.iter().enumerate() {
            let (out, cache) = head.forward(q_src, kv_src);
            for r in 0..n {
                for c in 0..d_head {
                    concat[(r, h * d_head + c)] = out[(r, c)];
                }
            }
            head_caches.push(cache);
        }
        let (y, proj_cache) = self.proj.forward(&concat);
        (
            y,
            MultiHeadCache {
                head_caches,
                proj_cache,
            },
        )
    }

    /// Returns `(dq_src, dkv_src, grads)` with per-head grads then projection.
    pub fn backward(
        &self,
        cache: &MultiHeadCache,
        dy: &Matrix,
    ) -> (Matrix, Matrix, Vec<Matrix>) {
        let (dconcat, proj_grads) = self.proj.backward(&cache.proj_cache, dy);
        let d_head = self.heads[0].d_head();
        let n = dconcat.rows();
        let mut dq_src: Option<Matrix> = None;
        let mut dkv_src: Option<Matrix> = None;
        let mut grads = Vec::with_capacity(self.heads.len() * 3 + 2);
        for (h, head) in self.heads.iter().enumerate() {
            let mut dhead = Matrix::zeros(n, d_head);
            for r in 0..n {
                for c in 0..d_head {
                    dhead[(r, c)] = dconcat[(r, h * d_head + c)];
                }
            }
            let (dq, dkv, head_grads) = head.backward(&cache.head_caches[h], &dhead);
            dq_src = Some(match dq_src {
                Some(acc) => acc.add(&dq),
                None => dq,
            });
            dkv_src = Some(match dkv_src {
                Some(acc) => acc.add(&dkv),
                None => dkv,
            });
            grads.extend(head_grads);
        }
        grads.extend(proj_grads);
        (dq_src.unwrap(), dkv_src.unwrap(), grads)
    }
}

impl Tunable for MultiHeadAttention {
    fn params(&self) -> Vec<&Matrix> {
        let mut p: Vec<&Matrix> = self.heads.iter().flat_map(|h| h.params()).collect();
        p.extend(self.proj.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p: Vec<&mut Matrix> = self
            .heads
            .iter_mut()
            .flat_map(|h| h.params_mut())
            .collect();
        p.push(&mut self.proj.w);
        p.push(&mut self.proj.b);
        p
    }
}

/// Sinusoidal positional encoding, one row per position.
pub fn positional_encoding(positions: usize, d_model: usize) -> Matrix {
    let mut pe = Matrix::zeros(positions, d_model);
    for pos in 0..positions {
        for i in 0..d_model {
            let exponent = (2 * (i / 2)) as f64 / d_model as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            pe[(pos, i)] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}
