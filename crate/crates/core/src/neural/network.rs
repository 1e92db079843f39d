//! Post-layer-norm transformer encoder with hand-written backpropagation.
//!
//! Per layer: `h = LN(x + Attn(x))`, `y = LN(h + W2·gelu(W1·h))`. The output
//! head projects onto the (tied) token embeddings plus a bias. Sequences of a
//! batch are stacked row-wise, so every activation is a `[batch·len, dim]`
//! matrix and attention runs per (sequence, head) block.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};

use super::params::{LayerSlots, ParameterSet, Real};
use super::ModelConfig;
use crate::corpus::{is_predictable, TokenId};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Flattened batch of equal-length sequences.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Batch<'a> {
    pub ids: &'a [TokenId],
    pub seq_len: usize,
}

impl Batch<'_> {
    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn sequences(&self) -> usize {
        self.ids.len() / self.seq_len
    }
}

/// A position whose prediction enters the loss: (row in the batch, gold id).
pub(crate) type Target = (usize, TokenId);

struct NormCache<T> {
    xhat: Array2<T>,
    rstd: Array1<T>,
}

struct LayerCache<T> {
    input: Array2<T>,
    qkv: Array2<T>,
    probs: Vec<Array2<T>>,
    context: Array2<T>,
    attn_norm: NormCache<T>,
    hidden: Array2<T>,
    ffn_pre: Array2<T>,
    ffn_act: Array2<T>,
    ffn_norm: NormCache<T>,
}

fn gelu<T: Real>(u: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let c = T::of(0.044_715);
    let half = T::of(0.5);
    half * u * (T::one() + (k * (u + c * u * u * u)).tanh())
}

fn gelu_grad<T: Real>(u: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let c = T::of(0.044_715);
    let half = T::of(0.5);
    let t = (k * (u + c * u * u * u)).tanh();
    half * (T::one() + t) + half * u * (T::one() - t * t) * k * (T::one() + T::of(3.0) * c * u * u)
}

fn softmax_rows<T: Real>(m: &mut Array2<T>) {
    for mut row in m.rows_mut() {
        let max = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let total = row.sum();
        row.mapv_inplace(|x| x / total);
    }
}

fn layer_norm<T: Real>(
    x: &Array2<T>,
    gamma: ArrayView1<T>,
    beta: ArrayView1<T>,
) -> (Array2<T>, NormCache<T>) {
    let d = T::of(x.ncols() as f64);
    let eps = T::of(LAYER_NORM_EPS);
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *r = T::one() / (var + eps).sqrt();
        let rr = *r;
        row.mapv_inplace(|v| v * rr);
    }
    let y = &xhat * &gamma + beta;
    (y, NormCache { xhat, rstd })
}

fn layer_norm_backward<T: Real>(
    dy: &Array2<T>,
    cache: &NormCache<T>,
    gamma: ArrayView1<T>,
    grads: &mut ParameterSet<T>,
    gamma_idx: usize,
    beta_idx: usize,
) -> Array2<T> {
    grads
        .vector_mut(gamma_idx)
        .scaled_add(T::one(), &(dy * &cache.xhat).sum_axis(Axis(0)));
    grads
        .vector_mut(beta_idx)
        .scaled_add(T::one(), &dy.sum_axis(Axis(0)));
    let d = T::of(dy.ncols() as f64);
    let mut dx = dy * &gamma;
    Zip::from(dx.rows_mut())
        .and(cache.xhat.rows())
        .and(&cache.rstd)
        .for_each(|mut row, xhat, &rstd| {
            let mean_dx = row.sum() / d;
            let mean_dx_xhat = row.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<T>() / d;
            Zip::from(&mut row)
                .and(&xhat)
                .for_each(|g, &xh| *g = rstd * (*g - mean_dx - xh * mean_dx_xhat));
        });
    dx
}

fn accumulate_matmul<T: Real>(a: ArrayView2<T>, b: ArrayView2<T>, out: &mut ArrayViewMut2<T>) {
    general_mat_mul(T::one(), &a, &b, T::one(), out);
}

fn embed<T: Real>(params: &ParameterSet<T>, batch: Batch) -> Array2<T> {
    let layout = params.layout();
    let tok = params.matrix(layout.token_embedding);
    let pos = params.matrix(layout.position_embedding);
    let d = tok.ncols();
    let mut x = Array2::zeros((batch.rows(), d));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        let id = batch.ids[i] as usize;
        let t = i % batch.seq_len;
        Zip::from(&mut row)
            .and(tok.row(id))
            .and(pos.row(t))
            .for_each(|o, &a, &b| *o = a + b);
    }
    x
}

fn layer_forward<T: Real>(
    params: &ParameterSet<T>,
    slots: &LayerSlots,
    heads: usize,
    x: Array2<T>,
    batch: Batch,
    cache: Option<&mut Vec<LayerCache<T>>>,
) -> Array2<T> {
    let d = x.ncols();
    let dh = d / heads;
    let len = batch.seq_len;
    let scale = T::of(1.0 / (dh as f64).sqrt());

    let qkv = x.dot(&params.matrix(slots.qkv_weight)) + params.vector(slots.qkv_bias);
    let mut context = Array2::zeros((x.nrows(), d));
    let mut probs = Vec::new();
    for b in 0..batch.sequences() {
        let rows = b * len..(b + 1) * len;
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let q = qkv.slice(s![rows.clone(), cols.clone()]);
            let k = qkv.slice(s![rows.clone(), d + cols.start..d + cols.end]);
            let v = qkv.slice(s![rows.clone(), 2 * d + cols.start..2 * d + cols.end]);
            let mut scores = q.dot(&k.t());
            scores.mapv_inplace(|x| x * scale);
            softmax_rows(&mut scores);
            let mut out = context.slice_mut(s![rows.clone(), cols]);
            general_mat_mul(T::one(), &scores, &v, T::zero(), &mut out);
            if cache.is_some() {
                probs.push(scores);
            }
        }
    }
    let attn = context.dot(&params.matrix(slots.out_weight)) + params.vector(slots.out_bias);
    let residual = &x + &attn;
    let (hidden, attn_norm) = layer_norm(
        &residual,
        params.vector(slots.attn_norm_gamma),
        params.vector(slots.attn_norm_beta),
    );
    let ffn_pre =
        hidden.dot(&params.matrix(slots.ffn_in_weight)) + params.vector(slots.ffn_in_bias);
    let ffn_act = ffn_pre.mapv(gelu);
    let ffn_out =
        ffn_act.dot(&params.matrix(slots.ffn_out_weight)) + params.vector(slots.ffn_out_bias);
    let residual = &hidden + &ffn_out;
    let (out, ffn_norm) = layer_norm(
        &residual,
        params.vector(slots.ffn_norm_gamma),
        params.vector(slots.ffn_norm_beta),
    );
    if let Some(cache) = cache {
        cache.push(LayerCache {
            input: x,
            qkv,
            probs,
            context,
            attn_norm,
            hidden,
            ffn_pre,
            ffn_act,
            ffn_norm,
        });
    }
    out
}

fn layer_backward<T: Real>(
    params: &ParameterSet<T>,
    grads: &mut ParameterSet<T>,
    slots: &LayerSlots,
    heads: usize,
    cache: &LayerCache<T>,
    batch: Batch,
    dout: &Array2<T>,
) -> Array2<T> {
    let d = dout.ncols();
    let dh = d / heads;
    let len = batch.seq_len;
    let scale = T::of(1.0 / (dh as f64).sqrt());

    let d_res2 = layer_norm_backward(
        dout,
        &cache.ffn_norm,
        params.vector(slots.ffn_norm_gamma),
        grads,
        slots.ffn_norm_gamma,
        slots.ffn_norm_beta,
    );
    accumulate_matmul(
        cache.ffn_act.t(),
        d_res2.view(),
        &mut grads.matrix_mut(slots.ffn_out_weight),
    );
    grads
        .vector_mut(slots.ffn_out_bias)
        .scaled_add(T::one(), &d_res2.sum_axis(Axis(0)));
    let mut d_pre = d_res2.dot(&params.matrix(slots.ffn_out_weight).t());
    Zip::from(&mut d_pre)
        .and(&cache.ffn_pre)
        .for_each(|g, &u| *g *= gelu_grad(u));
    accumulate_matmul(
        cache.hidden.t(),
        d_pre.view(),
        &mut grads.matrix_mut(slots.ffn_in_weight),
    );
    grads
        .vector_mut(slots.ffn_in_bias)
        .scaled_add(T::one(), &d_pre.sum_axis(Axis(0)));
    let d_hidden = d_res2 + d_pre.dot(&params.matrix(slots.ffn_in_weight).t());

    let d_res1 = layer_norm_backward(
        &d_hidden,
        &cache.attn_norm,
        params.vector(slots.attn_norm_gamma),
        grads,
        slots.attn_norm_gamma,
        slots.attn_norm_beta,
    );
    accumulate_matmul(
        cache.context.t(),
        d_res1.view(),
        &mut grads.matrix_mut(slots.out_weight),
    );
    grads
        .vector_mut(slots.out_bias)
        .scaled_add(T::one(), &d_res1.sum_axis(Axis(0)));
    let d_context = d_res1.dot(&params.matrix(slots.out_weight).t());

    let mut d_qkv = Array2::zeros(cache.qkv.raw_dim());
    for b in 0..batch.sequences() {
        let rows = b * len..(b + 1) * len;
        for h in 0..heads {
            let probs = &cache.probs[b * heads + h];
            let (q0, k0, v0) = (h * dh, d + h * dh, 2 * d + h * dh);
            let q = cache.qkv.slice(s![rows.clone(), q0..q0 + dh]);
            let k = cache.qkv.slice(s![rows.clone(), k0..k0 + dh]);
            let v = cache.qkv.slice(s![rows.clone(), v0..v0 + dh]);
            let d_ctx = d_context.slice(s![rows.clone(), q0..q0 + dh]);

            let d_probs = d_ctx.dot(&v.t());
            let mut dv = d_qkv.slice_mut(s![rows.clone(), v0..v0 + dh]);
            general_mat_mul(T::one(), &probs.t(), &d_ctx, T::one(), &mut dv);

            // Softmax backward, then undo the 1/sqrt(dh) scaling.
            let mut d_scores = d_probs;
            Zip::from(d_scores.rows_mut())
                .and(probs.rows())
                .for_each(|mut g, p| {
                    let dot: T = g.iter().zip(p).map(|(&a, &b)| a * b).sum();
                    Zip::from(&mut g)
                        .and(&p)
                        .for_each(|gi, &pi| *gi = pi * (*gi - dot) * scale);
                });
            let mut dq = d_qkv.slice_mut(s![rows.clone(), q0..q0 + dh]);
            general_mat_mul(T::one(), &d_scores, &k, T::one(), &mut dq);
            let mut dk = d_qkv.slice_mut(s![rows.clone(), k0..k0 + dh]);
            general_mat_mul(T::one(), &d_scores.t(), &q, T::one(), &mut dk);
        }
    }
    accumulate_matmul(
        cache.input.t(),
        d_qkv.view(),
        &mut grads.matrix_mut(slots.qkv_weight),
    );
    grads
        .vector_mut(slots.qkv_bias)
        .scaled_add(T::one(), &d_qkv.sum_axis(Axis(0)));
    d_res1 + d_qkv.dot(&params.matrix(slots.qkv_weight).t())
}

/// Final hidden states, `[rows, dim]`.
pub(crate) fn encode<T: Real>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    batch: Batch,
) -> Array2<T> {
    let mut x = embed(params, batch);
    for slots in &params.layout().layers {
        x = layer_forward(params, slots, config.heads, x, batch, None);
    }
    x
}

/// Output logits for the given hidden rows, `[rows, vocab]`.
pub(crate) fn head_logits<T: Real>(params: &ParameterSet<T>, hidden: ArrayView2<T>) -> Array2<T> {
    let layout = params.layout();
    hidden.dot(&params.matrix(layout.token_embedding).t()) + params.vector(layout.output_bias)
}

/// Log-softmax over predictable ids, in f64.
pub(crate) fn log_softmax_row<T: Real>(logits: ArrayView1<T>) -> Vec<f64> {
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| is_predictable(i as TokenId))
        .map(|(_, x)| x.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let log_z = max
        + logits
            .iter()
            .enumerate()
            .filter(|&(i, _)| is_predictable(i as TokenId))
            .map(|(_, x)| (x.as_f64() - max).exp())
            .sum::<f64>()
            .ln();
    logits
        .iter()
        .enumerate()
        .map(|(i, x)| {
            if is_predictable(i as TokenId) {
                x.as_f64() - log_z
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

fn select_rows<T: Real>(hidden: &Array2<T>, targets: &[Target]) -> Array2<T> {
    let rows: Vec<usize> = targets.iter().map(|&(r, _)| r).collect();
    hidden.select(Axis(0), &rows)
}

/// Mean cross-entropy over `targets`.
pub(crate) fn masked_loss<T: Real>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    batch: Batch,
    targets: &[Target],
) -> f64 {
    let hidden = encode(params, config, batch);
    let logits = head_logits(params, select_rows(&hidden, targets).view());
    let total: f64 = targets
        .iter()
        .zip(logits.rows())
        .map(|(&(_, gold), row)| -log_softmax_row(row)[gold as usize])
        .sum();
    total / targets.len() as f64
}

/// Mean cross-entropy over `targets`; gradients are added into `grads`.
pub(crate) fn masked_loss_and_grad<T: Real>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    batch: Batch,
    targets: &[Target],
    grads: &mut ParameterSet<T>,
) -> f64 {
    let layout = params.layout();
    let mut caches = Vec::with_capacity(layout.layers.len());
    let mut x = embed(params, batch);
    for slots in &layout.layers {
        x = layer_forward(params, slots, config.heads, x, batch, Some(&mut caches));
    }
    let hidden = x;

    let selected = select_rows(&hidden, targets);
    let logits = head_logits(params, selected.view());
    let n = targets.len() as f64;
    let mut total = 0.0;
    let mut d_logits = Array2::<T>::zeros(logits.raw_dim());
    for ((&(_, gold), row), mut d_row) in targets.iter().zip(logits.rows()).zip(d_logits.rows_mut())
    {
        let logp = log_softmax_row(row);
        total -= logp[gold as usize];
        for (i, g) in d_row.iter_mut().enumerate() {
            let p = logp[i].exp();
            let indicator = if i == gold as usize { 1.0 } else { 0.0 };
            *g = T::of((p - indicator) / n);
        }
    }

    accumulate_matmul(
        d_logits.t(),
        selected.view(),
        &mut grads.matrix_mut(layout.token_embedding),
    );
    grads
        .vector_mut(layout.output_bias)
        .scaled_add(T::one(), &d_logits.sum_axis(Axis(0)));
    let d_selected = d_logits.dot(&params.matrix(layout.token_embedding));
    let mut dx = Array2::zeros(hidden.raw_dim());
    for (&(r, _), row) in targets.iter().zip(d_selected.rows()) {
        let mut dst = dx.row_mut(r);
        dst += &row;
    }

    for (slots, cache) in layout.layers.iter().zip(&caches).rev() {
        dx = layer_backward(params, grads, slots, config.heads, cache, batch, &dx);
    }

    let mut d_tok = grads.matrix_mut(layout.token_embedding);
    for (i, row) in dx.rows().into_iter().enumerate() {
        let mut dst = d_tok.row_mut(batch.ids[i] as usize);
        dst += &row;
    }
    let mut d_pos = grads.matrix_mut(layout.position_embedding);
    for (i, row) in dx.rows().into_iter().enumerate() {
        let mut dst = d_pos.row_mut(i % batch.seq_len);
        dst += &row;
    }
    total / n
}
