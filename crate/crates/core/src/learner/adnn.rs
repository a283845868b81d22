//! Attention-based encoder/decoder forecaster.
//!
//! A window of scalar loads is lifted to `d_model` by a learned linear
//! embedding, gets sinusoidal position information added, and runs through
//! `l_e` encoder blocks (multi-head self-attention, then a two-layer
//! feed-forward, each followed by a residual connection and batch
//! normalization). The decoder receives the same embedded input; its blocks
//! add an encoder-decoder attention sub-block whose queries come from the
//! decoder state while keys and values come from the final encoder output.
//! A fully-connected ReLU layer turns the decoder output matrix into a
//! vector and a single linear neuron emits the next-interval prediction.
//!
//! Batches are processed as one `(B·n_s) × d_model` matrix: attention works
//! per-sample on row blocks while batch normalization sees all rows, which
//! is what makes its statistics batch statistics.

use rand_chacha::ChaCha8Rng;

use crate::tensor::layers::{
    accumulate_n, positional_encoding, BatchNorm, BatchNormCache, Dense, DenseCache,
    MultiHeadAttention, MultiHeadCache, Tunable,
};
use crate::tensor::{Activation, Matrix};

#[derive(Debug, Clone)]
pub struct Adnn {
    pub n_s: usize,
    pub d_model: usize,
    embed: Dense,
    pe: Matrix,
    encoder: Vec<EncoderBlock>,
    decoder: Vec<DecoderBlock>,
    head_hidden: Dense,
    head_out: Dense,
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    attn: MultiHeadAttention,
    bn_attn: BatchNorm,
    ff_in: Dense,
    ff_out: Dense,
    bn_ff: BatchNorm,
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    self_attn: MultiHeadAttention,
    bn_self: BatchNorm,
    cross_attn: MultiHeadAttention,
    bn_cross: BatchNorm,
    ff_in: Dense,
    ff_out: Dense,
    bn_ff: BatchNorm,
}

// Caches hold everything the backward pass needs, per forward call.

struct EncoderBlockCache {
    attn: Vec<MultiHeadCache>,
    bn_attn: BatchNormCache,
    ff_in: DenseCache,
    ff_out: DenseCache,
    bn_ff: BatchNormCache,
}

struct DecoderBlockCache {
    self_attn: Vec<MultiHeadCache>,
    bn_self: BatchNormCache,
    cross_attn: Vec<MultiHeadCache>,
    bn_cross: BatchNormCache,
    ff_in: DenseCache,
    ff_out: DenseCache,
    bn_ff: BatchNormCache,
}

pub struct AdnnCache {
    batch: usize,
    embed: DenseCache,
    encoder: Vec<EncoderBlockCache>,
    decoder: Vec<DecoderBlockCache>,
    head_hidden: DenseCache,
    head_out: DenseCache,
}

impl EncoderBlock {
    fn new(d_model: usize, h_e: usize, rng: &mut ChaCha8Rng) -> Self {
        EncoderBlock {
            attn: MultiHeadAttention::new(d_model, h_e, rng),
            bn_attn: BatchNorm::new(d_model),
            ff_in: Dense::new(d_model, 4 * d_model, Activation::Relu, rng),
            ff_out: Dense::new(4 * d_model, d_model, Activation::Linear, rng),
            bn_ff: BatchNorm::new(d_model),
        }
    }
}

impl DecoderBlock {
    fn new(d_model: usize, h_e: usize, rng: &mut ChaCha8Rng) -> Self {
        DecoderBlock {
            self_attn: MultiHeadAttention::new(d_model, h_e, rng),
            bn_self: BatchNorm::new(d_model),
            cross_attn: MultiHeadAttention::new(d_model, h_e, rng),
            bn_cross: BatchNorm::new(d_model),
            ff_in: Dense::new(d_model, 4 * d_model, Activation::Relu, rng),
            ff_out: Dense::new(4 * d_model, d_model, Activation::Linear, rng),
            bn_ff: BatchNorm::new(d_model),
        }
    }
}

/// Per-sample multi-head attention over row blocks of a stacked batch.
fn mha_blocked_forward(
    mha: &MultiHeadAttention,
    q_big: &Matrix,
    kv_big: &Matrix,
    n_s: usize,
) -> (Matrix, Vec<MultiHeadCache>) {
    let batch = q_big.rows() / n_s;
    let mut out = Matrix::zeros(q_big.rows(), q_big.cols());
    let mut caches = Vec::with_capacity(batch);
    for b in 0..batch {
        let q = q_big.row_block(b * n_s, (b + 1) * n_s);
        let kv = kv_big.row_block(b * n_s, (b + 1) * n_s);
        let (y, cache) = mha.forward(&q, &kv);
        out.set_row_block(b * n_s, &y);
        caches.push(cache);
    }
    (out, caches)
}

fn mha_blocked_backward(
    mha: &MultiHeadAttention,
    caches: &[MultiHeadCache],
    dy_big: &Matrix,
    n_s: usize,
) -> (Matrix, Matrix, Vec<Matrix>) {
    let mut dq_big = Matrix::zeros(dy_big.rows(), dy_big.cols());
    let mut dkv_big = Matrix::zeros(dy_big.rows(), dy_big.cols());
    let mut grads = mha.zeroed_grads();
    for (b, cache) in caches.iter().enumerate() {
        let dy = dy_big.row_block(b * n_s, (b + 1) * n_s);
        let (dq, dkv, g) = mha.backward(cache, &dy);
        dq_big.set_row_block(b * n_s, &dq);
        dkv_big.set_row_block(b * n_s, &dkv);
        accumulate_n(&mut grads, 0, g);
    }
    (dq_big, dkv_big, grads)
}

impl Adnn {
    pub fn new(n_s: usize, l_e: usize, h_e: usize, d_model: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(d_model % h_e == 0, "h_e must divide d_model");
        Adnn {
            n_s,
            d_model,
            embed: Dense::new(1, d_model, Activation::Linear, rng),
            pe: positional_encoding(n_s, d_model),
            encoder: (0..l_e).map(|_| EncoderBlock::new(d_model, h_e, rng)).collect(),
            decoder: (0..l_e).map(|_| DecoderBlock::new(d_model, h_e, rng)).collect(),
            head_hidden: Dense::new(n_s * d_model, d_model, Activation::Relu, rng),
            head_out: Dense::new(d_model, 1, Activation::Linear, rng),
        }
    }

    /// Stacks windows (rows of `x`) into one column and embeds each scalar.
    fn embed_input(&self, x: &Matrix, train: bool) -> (Matrix, Option<DenseCache>) {
        let batch = x.rows();
        let mut col = Vec::with_capacity(batch * self.n_s);
        for r in 0..batch {
            col.extend_from_slice(x.row(r));
        }
        let col = Matrix::col_vector(&col);
        let (mut emb, cache) = if train {
            let (e, c) = self.embed.forward(&col);
            (e, Some(c))
        } else {
            (self.embed.infer(&col), None)
        };
        for b in 0..batch {
            for p in 0..self.n_s {
                for c in 0..self.d_model {
                    emb[(b * self.n_s + p, c)] += self.pe[(p, c)];
                }
            }
        }
        (emb, cache)
    }

    /// Per-sample flatten of the `(B·n_s) × d` state into `B × (n_s·d)`.
    fn flatten_blocks(&self, big: &Matrix, batch: usize) -> Matrix {
        let width = self.n_s * self.d_model;
        let mut out = Matrix::zeros(batch, width);
        for b in 0..batch {
            let block = big.row_block(b * self.n_s, (b + 1) * self.n_s);
            out.row_mut(b).copy_from_slice(block.as_slice());
        }
        out
    }

    fn unflatten_blocks(&self, flat: &Matrix, batch: usize) -> Matrix {
        let mut out = Matrix::zeros(batch * self.n_s, self.d_model);
        for b in 0..batch {
            let block = Matrix::from_vec(self.n_s, self.d_model, flat.row(b).to_vec());
            out.set_row_block(b * self.n_s, &block);
        }
        out
    }

    /// Training-mode forward on a batch of windows (one per row of `x`).
    /// Batch normalization uses this batch's statistics.
    pub fn forward(&self, x: &Matrix) -> (Matrix, AdnnCache) {
        assert_eq!(x.cols(), self.n_s, "window length mismatch");
        let batch = x.rows();
        let (input, embed_cache) = self.embed_input(x, true);

        let mut enc_state = input.clone();
        let mut enc_caches = Vec::with_capacity(self.encoder.len());
        for block in &self.encoder {
            let (attn_out, attn_caches) =
                mha_blocked_forward(&block.attn, &enc_state, &enc_state, self.n_s);
            let (u1, bn_attn_cache) = block.bn_attn.forward_train(&enc_state.add(&attn_out));
            let (ff_mid, ff_in_cache) = block.ff_in.forward(&u1);
            let (ff_out, ff_out_cache) = block.ff_out.forward(&ff_mid);
            let (u2, bn_ff_cache) = block.bn_ff.forward_train(&u1.add(&ff_out));
            enc_caches.push(EncoderBlockCache {
                attn: attn_caches,
                bn_attn: bn_attn_cache,
                ff_in: ff_in_cache,
                ff_out: ff_out_cache,
                bn_ff: bn_ff_cache,
            });
            enc_state = u2;
        }

        let mut dec_state = input;
        let mut dec_caches = Vec::with_capacity(self.decoder.len());
        for block in &self.decoder {
            let (self_out, self_caches) =
                mha_blocked_forward(&block.self_attn, &dec_state, &dec_state, self.n_s);
            let (u1, bn_self_cache) = block.bn_self.forward_train(&dec_state.add(&self_out));
            let (cross_out, cross_caches) =
                mha_blocked_forward(&block.cross_attn, &u1, &enc_state, self.n_s);
            let (u2, bn_cross_cache) = block.bn_cross.forward_train(&u1.add(&cross_out));
            let (ff_mid, ff_in_cache) = block.ff_in.forward(&u2);
            let (ff_out, ff_out_cache) = block.ff_out.forward(&ff_mid);
            let (u3, bn_ff_cache) = block.bn_ff.forward_train(&u2.add(&ff_out));
            dec_caches.push(DecoderBlockCache {
                self_attn: self_caches,
                bn_self: bn_self_cache,
                cross_attn: cross_caches,
                bn_cross: bn_cross_cache,
                ff_in: ff_in_cache,
                ff_out: ff_out_cache,
                bn_ff: bn_ff_cache,
            });
            dec_state = u3;
        }

        let flat = self.flatten_blocks(&dec_state, batch);
        let (hidden, head_hidden_cache) = self.head_hidden.forward(&flat);
        let (preds, head_out_cache) = self.head_out.forward(&hidden);
        (
            preds,
            AdnnCache {
                batch,
                embed: embed_cache.unwrap(),
                encoder: enc_caches,
                decoder: dec_caches,
                head_hidden: head_hidden_cache,
                head_out: head_out_cache,
            },
        )
    }

    /// Inference-mode forward: batch norm uses running statistics.
    pub fn infer(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.cols(), self.n_s, "window length mismatch");
        let batch = x.rows();
        let (input, _) = self.embed_input(x, false);

        let mut enc_state = input.clone();
        for block in &self.encoder {
            let (attn_out, _) =
                mha_blocked_forward(&block.attn, &enc_state, &enc_state, self.n_s);
            let u1 = block.bn_attn.forward_infer(&enc_state.add(&attn_out));
            let ff = block.ff_out.infer(&block.ff_in.infer(&u1));
            enc_state = block.bn_ff.forward_infer(&u1.add(&ff));
        }

        let mut dec_state = input;
        for block in &self.decoder {
            let (self_out, _) =
                mha_blocked_forward(&block.self_attn, &dec_state, &dec_state, self.n_s);
            let u1 = block.bn_self.forward_infer(&dec_state.add(&self_out));
            let (cross_out, _) =
                mha_blocked_forward(&block.cross_attn, &u1, &enc_state, self.n_s);
            let u2 = block.bn_cross.forward_infer(&u1.add(&cross_out));
            let ff = block.ff_out.infer(&block.ff_in.infer(&u2));
            dec_state = block.bn_ff.forward_infer(&u2.add(&ff));
        }

        let flat = self.flatten_blocks(&dec_state, batch);
        self.head_out.infer(&self.head_hidden.infer(&flat))
    }

    /// Gradients in params order given dL/dpred for the cached forward.
    pub fn backward(&self, cache: &AdnnCache, dpred: &Matrix) -> Vec<Matrix> {
        let mut grads = self.zeroed_grads();
        let offsets = self.param_offsets();
        let batch = cache.batch;

        let (dhidden, head_out_grads) = self.head_out.backward(&cache.head_out, dpred);
        accumulate_n(&mut grads, offsets.head_out, head_out_grads);
        let (dflat, head_hidden_grads) =
            self.head_hidden.backward(&cache.head_hidden, &dhidden);
        accumulate_n(&mut grads, offsets.head_hidden, head_hidden_grads);

        let mut d_dec = self.unflatten_blocks(&dflat, batch);
        let mut d_enc_final: Option<Matrix> = None;
        for (li, block) in self.decoder.iter().enumerate().rev() {
            let bc = &cache.decoder[li];
            let (du2_sum, bn_ff_grads) = block.bn_ff.backward(&bc.bn_ff, &d_dec);
            let (dff_mid, ff_out_grads) = block.ff_out.backward(&bc.ff_out, &du2_sum);
            let (du2_ff, ff_in_grads) = block.ff_in.backward(&bc.ff_in, &dff_mid);
            let du2 = du2_sum.add(&du2_ff);

            let (du1_sum, bn_cross_grads) = block.bn_cross.backward(&bc.bn_cross, &du2);
            let (dq, denc, cross_grads) =
                mha_blocked_backward(&block.cross_attn, &bc.cross_attn, &du1_sum, self.n_s);
            d_enc_final = Some(match d_enc_final {
                Some(acc) => acc.add(&denc),
                None => denc,
            });
            let du1 = du1_sum.add(&dq);

            let (dstate_sum, bn_self_grads) = block.bn_self.backward(&bc.bn_self, &du1);
            let (dq_self, dkv_self, self_grads) =
                mha_blocked_backward(&block.self_attn, &bc.self_attn, &dstate_sum, self.n_s);
            d_dec = dstate_sum.add(&dq_self).add(&dkv_self);

            let base = offsets.decoder[li];
            let mut off = base;
            off = accumulate_n(&mut grads, off, self_grads);
            off = accumulate_n(&mut grads, off, bn_self_grads);
            off = accumulate_n(&mut grads, off, cross_grads);
            off = accumulate_n(&mut grads, off, bn_cross_grads);
            off = accumulate_n(&mut grads, off, ff_in_grads);
            off = accumulate_n(&mut grads, off, ff_out_grads);
            accumulate_n(&mut grads, off, bn_ff_grads);
        }

        let mut d_enc = d_enc_final.expect("decoder depth is at least one");
        for (li, block) in self.encoder.iter().enumerate().rev() {
            let bc = &cache.encoder[li];
            let (du1_sum, bn_ff_grads) = block.bn_ff.backward(&bc.bn_ff, &d_enc);
            let (dff_mid, ff_out_grads) = block.ff_out.backward(&bc.ff_out, &du1_sum);
            let (du1_ff, ff_in_grads) = block.ff_in.backward(&bc.ff_in, &dff_mid);
            let du1 = du1_sum.add(&du1_ff);

            let (dstate_sum, bn_attn_grads) = block.bn_attn.backward(&bc.bn_attn, &du1);
            let (dq, dkv, attn_grads) =
                mha_blocked_backward(&block.attn, &bc.attn, &dstate_sum, self.n_s);
            d_enc = dstate_sum.add(&dq).add(&dkv);

            let base = offsets.encoder[li];
            let mut off = base;
            off = accumulate_n(&mut grads, off, attn_grads);
            off = accumulate_n(&mut grads, off, bn_attn_grads);
            off = accumulate_n(&mut grads, off, ff_in_grads);
            off = accumulate_n(&mut grads, off, ff_out_grads);
            accumulate_n(&mut grads, off, bn_ff_grads);
        }

        // Both streams read the same embedded input; position encoding is
        // constant so the gradient passes straight through the addition.
        let d_input = d_enc.add(&d_dec);
        let (_, embed_grads) = self.embed.backward(&cache.embed, &d_input);
        accumulate_n(&mut grads, offsets.embed, embed_grads);
        grads
    }

    /// Batch-norm running statistics in a canonical order (checkpoint state
    /// that is not part of the trainable parameters).
    pub fn norm_state(&self) -> Vec<&Matrix> {
        let mut s = Vec::new();
        for b in &self.encoder {
            s.push(&b.bn_attn.running_mean);
            s.push(&b.bn_attn.running_var);
            s.push(&b.bn_ff.running_mean);
            s.push(&b.bn_ff.running_var);
        }
        for b in &self.decoder {
            s.push(&b.bn_self.running_mean);
            s.push(&b.bn_self.running_var);
            s.push(&b.bn_cross.running_mean);
            s.push(&b.bn_cross.running_var);
            s.push(&b.bn_ff.running_mean);
            s.push(&b.bn_ff.running_var);
        }
        s
    }

    /// Mutable trainable parameters and running statistics in one
    /// traversal, in the same orders as [`Tunable::params`] and
    /// [`Adnn::norm_state`].
    pub fn tensors_mut(&mut self) -> (Vec<&mut Matrix>, Vec<&mut Matrix>) {
        let mut p: Vec<&mut Matrix> = vec![&mut self.embed.w, &mut self.embed.b];
        let mut s: Vec<&mut Matrix> = Vec::new();
        for b in &mut self.encoder {
            p.extend(b.attn.params_mut());
            p.push(&mut b.bn_attn.gain);
            p.push(&mut b.bn_attn.bias);
            s.push(&mut b.bn_attn.running_mean);
            s.push(&mut b.bn_attn.running_var);
            p.push(&mut b.ff_in.w);
            p.push(&mut b.ff_in.b);
            p.push(&mut b.ff_out.w);
            p.push(&mut b.ff_out.b);
            p.push(&mut b.bn_ff.gain);
            p.push(&mut b.bn_ff.bias);
            s.push(&mut b.bn_ff.running_mean);
            s.push(&mut b.bn_ff.running_var);
        }
        for b in &mut self.decoder {
            p.extend(b.self_attn.params_mut());
            p.push(&mut b.bn_self.gain);
            p.push(&mut b.bn_self.bias);
            s.push(&mut b.bn_self.running_mean);
            s.push(&mut b.bn_self.running_var);
            p.extend(b.cross_attn.params_mut());
            p.push(&mut b.bn_cross.gain);
            p.push(&mut b.bn_cross.bias);
            s.push(&mut b.bn_cross.running_mean);
            s.push(&mut b.bn_cross.running_var);
            p.push(&mut b.ff_in.w);
            p.push(&mut b.ff_in.b);
            p.push(&mut b.ff_out.w);
            p.push(&mut b.ff_out.b);
            p.push(&mut b.bn_ff.gain);
            p.push(&mut b.bn_ff.bias);
            s.push(&mut b.bn_ff.running_mean);
            s.push(&mut b.bn_ff.running_var);
        }
        p.push(&mut self.head_hidden.w);
        p.push(&mut self.head_hidden.b);
        p.push(&mut self.head_out.w);
        p.push(&mut self.head_out.b);
        (p, s)
    }

    /// Folds this step's batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, cache: &AdnnCache) {
        for (block, bc) in self.encoder.iter_mut().zip(&cache.encoder) {
            block.bn_attn.update_running(&bc.bn_attn);
            block.bn_ff.update_running(&bc.bn_ff);
        }
        for (block, bc) in self.decoder.iter_mut().zip(&cache.decoder) {
            block.bn_self.update_running(&bc.bn_self);
            block.bn_cross.update_running(&bc.bn_cross);
            block.bn_ff.update_running(&bc.bn_ff);
        }
    }

    fn param_offsets(&self) -> ParamOffsets {
        let mut off = 0usize;
        let embed = off;
        off += 2;
        let mut encoder = Vec::with_capacity(self.encoder.len());
        for block in &self.encoder {
            encoder.push(off);
            off += block.attn.params().len() + 2 + 2 + 2 + 2;
        }
        let mut decoder = Vec::with_capacity(self.decoder.len());
        for block in &self.decoder {
            decoder.push(off);
            off += block.self_attn.params().len()
                + 2
                + block.cross_attn.params().len()
                + 2
                + 2
                + 2
                + 2;
        }
        let head_hidden = off;
        let head_out = off + 2;
        ParamOffsets {
            embed,
            encoder,
            decoder,
            head_hidden,
            head_out,
        }
    }
}

struct ParamOffsets {
    embed: usize,
    encoder: Vec<usize>,
    decoder: Vec<usize>,
    head_hidden: usize,
    head_out: usize,
}

impl Tunable for Adnn {
    fn params(&self) -> Vec<&Matrix> {
        let mut p = self.embed.params();
        for b in &self.encoder {
            p.extend(b.attn.params());
            p.extend(b.bn_attn.params());
            p.extend(b.ff_in.params());
            p.extend(b.ff_out.params());
            p.extend(b.bn_ff.params());
        }
        for b in &self.decoder {
            p.extend(b.self_attn.params());
            p.extend(b.bn_self.params());
            p.extend(b.cross_attn.params());
            p.extend(b.bn_cross.params());
            p.extend(b.ff_in.params());
            p.extend(b.ff_out.params());
            p.extend(b.bn_ff.params());
        }
        p.extend(self.head_hidden.params());
        p.extend(self.head_out.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = vec![&mut self.embed.w, &mut self.embed.b];
        for b in &mut self.encoder {
            p.extend(b.attn.params_mut());
            p.extend(b.bn_attn.params_mut());
            p.push(&mut b.ff_in.w);
            p.push(&mut b.ff_in.b);
            p.push(&mut b.ff_out.w);
            p.push(&mut b.ff_out.b);
            p.extend(b.bn_ff.params_mut());
        }
        for b in &mut self.decoder {
            p.extend(b.self_attn.params_mut());
            p.extend(b.bn_self.params_mut());
            p.extend(b.cross_attn.params_mut());
            p.extend(b.bn_cross.params_mut());
            p.push(&mut b.ff_in.w);
            p.push(&mut b.ff_in.b);
            p.push(&mut b.ff_out.w);
            p.push(&mut b.ff_out.b);
            p.extend(b.bn_ff.params_mut());
        }
        p.push(&mut self.head_hidden.w);
        p.push(&mut self.head_hidden.b);
        p.push(&mut self.head_out.w);
        p.push(&mut self.head_out.b);
        p
    }
}
