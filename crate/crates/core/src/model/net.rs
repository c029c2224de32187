//! Forward and backward passes of the encoder classifier.
//!
//! Layer layout (post-layer-norm residual blocks):
//!
//! ```text
//! h   = LN1(x + Dropout(MultiHeadSparseAttention(x)))
//! out = LN2(h + Dropout(FFN(h)))        FFN(h) = GELU(h·W1 + b1)·W2 + b2
//! ```
//!
//! The start token's final hidden state feeds a linear head whose sigmoid is
//! the positive-class probability. Everything runs per sample: sequences
//! have ragged lengths and padding is stripped before the model ever sees
//! an input.

use rand::RngExt;
use rand_chacha::ChaCha20Rng;

use crate::attention::{
    attention_weight_triples, sparse_attention, sparse_attention_backward, AttentionPattern,
};
use crate::embedding::{embed_sequence, embed_sequence_backward};
use crate::error::{Error, Result};
use crate::mat::{axpy, dot, Mat, Scalar};
use crate::model::input::{attention_pattern, PreparedSample};
use crate::model::{ModelConfig, ModelParams};
use crate::objective::sigmoid;

const LN_EPS: f64 = 1e-5;
const GELU_COEFF: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_CUBIC: f64 = 0.044_715;

/// GELU, tanh approximation.
fn gelu<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_COEFF);
    let a = T::from_f64(GELU_CUBIC);
    let half = T::from_f64(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (T::one() + u.tanh())
}

/// Exact derivative of the tanh-approximated GELU above.
fn gelu_prime<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_COEFF);
    let a = T::from_f64(GELU_CUBIC);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + three * a * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

/// Per-row layer-norm cache: normalized activations and 1/σ.
struct LnCache<T> {
    x_hat: Mat<T>,
    inv_std: Vec<T>,
}

fn layer_norm_forward<T: Scalar>(
    x: &Mat<T>,
    gamma: &Mat<T>,
    beta: &Mat<T>,
) -> (Mat<T>, LnCache<T>) {
    let (rows, cols) = (x.rows(), x.cols());
    let inv_cols = T::from_f64(1.0 / cols as f64);
    let eps = T::from_f64(LN_EPS);
    let mut out = Mat::zeros(rows, cols);
    let mut x_hat = Mat::zeros(rows, cols);
    let mut inv_std = Vec::with_capacity(rows);
    for i in 0..rows {
        let row = x.row(i);
        let mut mean = T::zero();
        for &v in row {
            mean += v;
        }
        mean *= inv_cols;
        let mut var = T::zero();
        for &v in row {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_cols;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        for j in 0..cols {
            let xh = (row[j] - mean) * is;
            x_hat.set(i, j, xh);
            out.set(i, j, gamma.get(0, j) * xh + beta.get(0, j));
        }
    }
    (out, LnCache { x_hat, inv_std })
}

/// Backward through layer norm; accumulates parameter gradients and returns
/// the gradient at the un-normalized input.
fn layer_norm_backward<T: Scalar>(
    d_out: &Mat<T>,
    cache: &LnCache<T>,
    gamma: &Mat<T>,
    d_gamma: &mut Mat<T>,
    d_beta: &mut Mat<T>,
) -> Mat<T> {
    let (rows, cols) = (d_out.rows(), d_out.cols());
    let inv_cols = T::from_f64(1.0 / cols as f64);
    let mut d_in = Mat::zeros(rows, cols);
    for i in 0..rows {
        let dy = d_out.row(i);
        let xh = cache.x_hat.row(i);
        let mut mean_dxh = T::zero();
        let mut mean_dxh_xh = T::zero();
        for j in 0..cols {
            let dxh = dy[j] * gamma.get(0, j);
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[j];
            *d_gamma.row_mut(0).get_mut(j).expect("gamma width") += dy[j] * xh[j];
            *d_beta.row_mut(0).get_mut(j).expect("beta width") += dy[j];
        }
        mean_dxh *= inv_cols;
        mean_dxh_xh *= inv_cols;
        let is = cache.inv_std[i];
        for j in 0..cols {
            let dxh = dy[j] * gamma.get(0, j);
            d_in.set(i, j, is * (dxh - mean_dxh - xh[j] * mean_dxh_xh));
        }
    }
    d_in
}

/// Adds the column sums of `src` into a 1×cols bias gradient.
fn add_col_sums<T: Scalar>(src: &Mat<T>, into: &mut Mat<T>) {
    debug_assert_eq!(into.rows(), 1);
    debug_assert_eq!(into.cols(), src.cols());
    for i in 0..src.rows() {
        axpy(T::one(), src.row(i), into.row_mut(0));
    }
}

/// Inverted-dropout mask: kept entries carry 1/(1−rate) so expectations
/// match inference, dropped entries are zero.
fn dropout_mask<T: Scalar>(len: usize, rate: f64, rng: &mut ChaCha20Rng) -> Vec<T> {
    let keep_scale = T::from_f64(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep_scale
            }
        })
        .collect()
}

fn apply_mask<T: Scalar>(m: &mut Mat<T>, mask: &[T]) {
    for (v, &s) in m.data_mut().iter_mut().zip(mask) {
        *v *= s;
    }
}

struct LayerCache<T> {
    x_in: Mat<T>,
    q: Mat<T>,
    k: Mat<T>,
    v: Mat<T>,
    attn_concat: Mat<T>,
    attn_mask: Option<Vec<T>>,
    ln1: LnCache<T>,
    h: Mat<T>,
    ffn_pre: Mat<T>,
    ffn_mask: Option<Vec<T>>,
    ln2: LnCache<T>,
}

/// Everything the backward pass needs, plus the prediction itself.
pub(crate) struct ForwardCache<T> {
    patterns: Vec<AttentionPattern>,
    layers: Vec<LayerCache<T>>,
    final_out: Mat<T>,
    pub logit: T,
    pub prob: T,
}

/// Runs the network over one prepared sample, retaining activations.
/// `dropout_rng` being present marks a training-mode pass.
pub(crate) fn forward_cached<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    sample: &PreparedSample,
    mut dropout_rng: Option<&mut ChaCha20Rng>,
) -> Result<ForwardCache<T>> {
    if let Some(&max_id) = sample.tokens.ids.iter().max() {
        if (max_id as usize) >= params.vocab_size() {
            return Err(Error::invalid_input(format!(
                "token id {max_id} outside the model's vocabulary of {}",
                params.vocab_size()
            )));
        }
    }
    let emb_config = config.embedding_config();
    let embedded = embed_sequence(&sample.tokens, &sample.paths, &params.embed, &emb_config);
    let seq_len = embedded.features.rows();
    let d = config.model_dim;
    let heads = config.heads;
    let head_dim = config.head_dim();
    let scale = T::from_f64(1.0 / (head_dim as f64).sqrt());

    let mut patterns = Vec::with_capacity(config.layers);
    for layer in 0..config.layers {
        patterns.push(attention_pattern(seq_len, &sample.globals, config, layer)?);
    }

    let mut x = embedded.features;
    let mut layers = Vec::with_capacity(config.layers);
    for (layer_params, pattern) in params.layers.iter().zip(&patterns) {
        let mut q = x.matmul(&layer_params.wq);
        q.add_row_bias(layer_params.bq.row(0));
        let mut k = x.matmul(&layer_params.wk);
        k.add_row_bias(layer_params.bk.row(0));
        let mut v = x.matmul(&layer_params.wv);
        v.add_row_bias(layer_params.bv.row(0));

        let mut attn_concat = Mat::zeros(seq_len, d);
        for h in 0..heads {
            let qh = q.col_slice(h * head_dim, head_dim);
            let kh = k.col_slice(h * head_dim, head_dim);
            let vh = v.col_slice(h * head_dim, head_dim);
            let oh = sparse_attention(&qh, &kh, &vh, pattern, scale)?;
            attn_concat.col_slice_add(h * head_dim, &oh);
        }
        let mut attn_out = attn_concat.matmul(&layer_params.wo);
        attn_out.add_row_bias(layer_params.bo.row(0));
        let attn_mask = match dropout_rng.as_deref_mut() {
            Some(rng) if config.dropout > 0.0 => {
                let mask = dropout_mask(seq_len * d, config.dropout, rng);
                apply_mask(&mut attn_out, &mask);
                Some(mask)
            }
            _ => None,
        };

        let mut sum1 = x.clone();
        sum1.add_assign(&attn_out);
        let (h_mat, ln1) =
            layer_norm_forward(&sum1, &layer_params.ln1_gamma, &layer_params.ln1_beta);

        let mut ffn_pre = h_mat.matmul(&layer_params.ffn_w1);
        ffn_pre.add_row_bias(layer_params.ffn_b1.row(0));
        let act = Mat::from_fn(seq_len, config.ffn_dim, |i, j| gelu(ffn_pre.get(i, j)));
        let mut ffn_out = act.matmul(&layer_params.ffn_w2);
        ffn_out.add_row_bias(layer_params.ffn_b2.row(0));
        let ffn_mask = match dropout_rng.as_deref_mut() {
            Some(rng) if config.dropout > 0.0 => {
                let mask = dropout_mask(seq_len * d, config.dropout, rng);
                apply_mask(&mut ffn_out, &mask);
                Some(mask)
            }
            _ => None,
        };

        let mut sum2 = h_mat.clone();
        sum2.add_assign(&ffn_out);
        let (out, ln2) =
            layer_norm_forward(&sum2, &layer_params.ln2_gamma, &layer_params.ln2_beta);

        layers.push(LayerCache {
            x_in: x,
            q,
            k,
            v,
            attn_concat,
            attn_mask,
            ln1,
            h: h_mat,
            ffn_pre,
            ffn_mask,
            ln2,
        });
        x = out;
    }

    let logit = dot(x.row(0), params.head_weight.data()) + params.head_bias.get(0, 0);
    let prob = sigmoid(logit);
    Ok(ForwardCache {
        patterns,
        layers,
        final_out: x,
        logit,
        prob,
    })
}

/// Accumulates parameter gradients (`grads += ∂loss/∂θ`) for one sample
/// given the loss gradient at its logit.
pub(crate) fn backward_sample<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    sample: &PreparedSample,
    cache: &ForwardCache<T>,
    d_logit: T,
    grads: &mut ModelParams<T>,
) {
    let d = config.model_dim;
    let heads = config.heads;
    let head_dim = config.head_dim();
    let scale = T::from_f64(1.0 / (head_dim as f64).sqrt());
    let seq_len = cache.final_out.rows();

    // Head: logit = out[0]·w + b.
    axpy(
        d_logit,
        cache.final_out.row(0),
        grads.head_weight.data_mut(),
    );
    *grads
        .head_bias
        .data_mut()
        .first_mut()
        .expect("1×1 head bias") += d_logit;
    let mut d_x = Mat::zeros(seq_len, d);
    axpy(d_logit, params.head_weight.data(), d_x.row_mut(0));

    for (layer_idx, (layer_params, layer_cache)) in params
        .layers
        .iter()
        .zip(&cache.layers)
        .enumerate()
        .rev()
    {
        let pattern = &cache.patterns[layer_idx];
        let g = &mut grads.layers[layer_idx];

        // out = LN2(h + dropout(ffn_out))
        let d_sum2 = layer_norm_backward(
            &d_x,
            &layer_cache.ln2,
            &layer_params.ln2_gamma,
            &mut g.ln2_gamma,
            &mut g.ln2_beta,
        );
        let mut d_h = d_sum2.clone();
        let mut d_ffn_out = d_sum2;
        if let Some(mask) = &layer_cache.ffn_mask {
            apply_mask(&mut d_ffn_out, mask);
        }

        // ffn_out = gelu(h·W1 + b1)·W2 + b2
        let act = Mat::from_fn(seq_len, config.ffn_dim, |i, j| {
            gelu(layer_cache.ffn_pre.get(i, j))
        });
        g.ffn_w2.add_assign(&act.matmul_tn(&d_ffn_out));
        add_col_sums(&d_ffn_out, &mut g.ffn_b2);
        let d_act = d_ffn_out.matmul_nt(&layer_params.ffn_w2);
        let d_pre = Mat::from_fn(seq_len, config.ffn_dim, |i, j| {
            d_act.get(i, j) * gelu_prime(layer_cache.ffn_pre.get(i, j))
        });
        g.ffn_w1.add_assign(&layer_cache.h.matmul_tn(&d_pre));
        add_col_sums(&d_pre, &mut g.ffn_b1);
        d_h.add_assign(&d_pre.matmul_nt(&layer_params.ffn_w1));

        // h = LN1(x + dropout(attn_out))
        let d_sum1 = layer_norm_backward(
            &d_h,
            &layer_cache.ln1,
            &layer_params.ln1_gamma,
            &mut g.ln1_gamma,
            &mut g.ln1_beta,
        );
        d_x = d_sum1.clone();
        let mut d_attn_out = d_sum1;
        if let Some(mask) = &layer_cache.attn_mask {
            apply_mask(&mut d_attn_out, mask);
        }

        // attn_out = concat(heads)·Wo + bo
        g.wo.add_assign(&layer_cache.attn_concat.matmul_tn(&d_attn_out));
        add_col_sums(&d_attn_out, &mut g.bo);
        let d_concat = d_attn_out.matmul_nt(&layer_params.wo);

        let mut dq = Mat::zeros(seq_len, d);
        let mut dk = Mat::zeros(seq_len, d);
        let mut dv = Mat::zeros(seq_len, d);
        for h in 0..heads {
            let qh = layer_cache.q.col_slice(h * head_dim, head_dim);
            let kh = layer_cache.k.col_slice(h * head_dim, head_dim);
            let vh = layer_cache.v.col_slice(h * head_dim, head_dim);
            let d_oh = d_concat.col_slice(h * head_dim, head_dim);
            let head_grads = sparse_attention_backward(&qh, &kh, &vh, pattern, scale, &d_oh)
                .expect("cached activations share one shape");
            dq.col_slice_add(h * head_dim, &head_grads.dq);
            dk.col_slice_add(h * head_dim, &head_grads.dk);
            dv.col_slice_add(h * head_dim, &head_grads.dv);
        }

        // q = x·Wq + bq (and likewise k, v).
        g.wq.add_assign(&layer_cache.x_in.matmul_tn(&dq));
        add_col_sums(&dq, &mut g.bq);
        d_x.add_assign(&dq.matmul_nt(&layer_params.wq));
        g.wk.add_assign(&layer_cache.x_in.matmul_tn(&dk));
        add_col_sums(&dk, &mut g.bk);
        d_x.add_assign(&dk.matmul_nt(&layer_params.wk));
        g.wv.add_assign(&layer_cache.x_in.matmul_tn(&dv));
        add_col_sums(&dv, &mut g.bv);
        d_x.add_assign(&dv.matmul_nt(&layer_params.wv));
    }

    embed_sequence_backward(
        &sample.tokens,
        &sample.paths,
        &config.embedding_config(),
        &d_x,
        &mut grads.embed,
    );
}

/// Attention weights of one forward pass: `[layer][head]` lists of
/// (query, key, weight) triples over the allowed pairs.
pub type AttentionWeights<T> = Vec<Vec<Vec<(usize, usize, T)>>>;

/// Inference output for one sample.
#[derive(Debug, Clone)]
pub struct ForwardResult<T> {
    pub logit: T,
    pub prob: T,
    pub attention: Option<AttentionWeights<T>>,
}

/// Inference over one sample; optionally also reports every layer's
/// attention weights (the hook behind attention heatmaps).
pub fn forward_sample<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    sample: &PreparedSample,
    collect_attention: bool,
) -> Result<ForwardResult<T>> {
    let cache = forward_cached(params, config, sample, None)?;
    let attention = if collect_attention {
        let head_dim = config.head_dim();
        let scale = T::from_f64(1.0 / (head_dim as f64).sqrt());
        let mut all = Vec::with_capacity(config.layers);
        for (layer_cache, pattern) in cache.layers.iter().zip(&cache.patterns) {
            let mut per_head = Vec::with_capacity(config.heads);
            for h in 0..config.heads {
                let qh = layer_cache.q.col_slice(h * head_dim, head_dim);
                let kh = layer_cache.k.col_slice(h * head_dim, head_dim);
                per_head.push(attention_weight_triples(&qh, &kh, pattern, scale)?);
            }
            all.push(per_head);
        }
        Some(all)
    } else {
        None
    };
    Ok(ForwardResult {
        logit: cache.logit,
        prob: cache.prob,
        attention,
    })
}

/// Positive-class probabilities for a batch, sample by sample.
pub fn forward_probs<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    samples: &[PreparedSample],
) -> Result<Vec<T>> {
    samples
        .iter()
        .map(|s| Ok(forward_cached(params, config, s, None)?.prob))
        .collect()
}
