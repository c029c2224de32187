//! Sparse long-sequence attention: a sliding window (optionally dilated)
//! around each token plus full attention for designated global tokens.
//!
//! [`sparse_attention`] touches only the allowed pairs and is what the model
//! runs; [`dense_reference_attention`] materializes the full L×L score
//! matrix with −∞ masking and serves as an independently-written oracle the
//! test suite compares against. Keep the two implementations separate — the
//! comparison is the point.
//!
//! All row summations run in ascending column order, so results are
//! bitwise-deterministic.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::mat::{axpy, dot, softmax_in_place, Mat, Scalar};

/// Which pairs may attend: a window of `window` total span (`window/2` each
/// side) stepped by `dilation`, plus all pairs touching a global index, plus
/// every diagonal element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionPattern {
    window: usize,
    dilation: usize,
    global_indices: BTreeSet<usize>,
    seq_len: usize,
}

impl AttentionPattern {
    /// Validates: `window` even and ≥ 2, `dilation` ≥ 1, globals within
    /// `[0, seq_len)`.
    pub fn new(
        window: usize,
        dilation: usize,
        global_indices: impl IntoIterator<Item = usize>,
        seq_len: usize,
    ) -> Result<Self> {
        if window < 2 || window % 2 != 0 {
            return Err(Error::invalid_input(format!(
                "attention window must be even and ≥ 2, got {window}"
            )));
        }
        if dilation == 0 {
            return Err(Error::invalid_input("attention dilation must be ≥ 1"));
        }
        let global_indices: BTreeSet<usize> = global_indices.into_iter().collect();
        if let Some(&max) = global_indices.iter().next_back() {
            if max >= seq_len {
                return Err(Error::invalid_input(format!(
                    "global index {max} outside sequence of length {seq_len}"
                )));
            }
        }
        Ok(AttentionPattern {
            window,
            dilation,
            global_indices,
            seq_len,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn global_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.global_indices.iter().copied()
    }

    /// True iff `i` may attend to `j`.
    pub fn allows(&self, i: usize, j: usize) -> bool {
        if i == j || self.global_indices.contains(&i) || self.global_indices.contains(&j) {
            return true;
        }
        let delta = j as isize - i as isize;
        let dilation = self.dilation as isize;
        delta % dilation == 0 && (delta / dilation).unsigned_abs() <= self.window / 2
    }

    /// Allowed columns of row `i`, ascending and duplicate-free. This is the
    /// summation order of every row reduction.
    pub fn allowed_columns(&self, i: usize) -> Vec<usize> {
        if self.global_indices.contains(&i) {
            return (0..self.seq_len).collect();
        }
        let mut cols: Vec<usize> = self.global_indices.iter().copied().collect();
        let half = (self.window / 2) as isize;
        for k in -half..=half {
            let j = i as isize + k * self.dilation as isize;
            if j >= 0 && (j as usize) < self.seq_len {
                cols.push(j as usize);
            }
        }
        cols.sort_unstable();
        cols.dedup();
        cols
    }
}

/// Materialized L × L allow-relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    seq_len: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn from_fn(seq_len: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(seq_len * seq_len);
        for i in 0..seq_len {
            for j in 0..seq_len {
                allowed.push(f(i, j));
            }
        }
        AttentionMask { seq_len, allowed }
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.seq_len + j]
    }
}

/// Expands a pattern into its mask, row by row.
pub fn build_mask(pattern: &AttentionPattern) -> AttentionMask {
    AttentionMask::from_fn(pattern.seq_len, |i, j| pattern.allows(i, j))
}

fn check_shapes<T: Scalar>(q: &Mat<T>, k: &Mat<T>, v: &Mat<T>, seq_len: usize) -> Result<()> {
    if q.rows() != seq_len || k.rows() != seq_len || v.rows() != seq_len {
        return Err(Error::invalid_input(format!(
            "attention inputs must have {seq_len} rows, got Q={}, K={}, V={}",
            q.rows(),
            k.rows(),
            v.rows()
        )));
    }
    if q.cols() != k.cols() {
        return Err(Error::invalid_input(format!(
            "Q and K widths differ: {} vs {}",
            q.cols(),
            k.cols()
        )));
    }
    Ok(())
}

/// Row i = softmax over allowed j of (scale·Q_i·K_j), applied to V.
/// Disallowed pairs are never touched, so they contribute exactly zero.
pub fn sparse_attention<T: Scalar>(
    q: &Mat<T>,
    k: &Mat<T>,
    v: &Mat<T>,
    pattern: &AttentionPattern,
    scale: T,
) -> Result<Mat<T>> {
    check_shapes(q, k, v, pattern.seq_len)?;
    let mut out = Mat::zeros(pattern.seq_len, v.cols());
    for i in 0..pattern.seq_len {
        let cols = pattern.allowed_columns(i);
        let mut probs: Vec<T> = cols
            .iter()
            .map(|&j| scale * dot(q.row(i), k.row(j)))
            .collect();
        softmax_in_place(&mut probs);
        let out_row = out.row_mut(i);
        for (&p, &j) in probs.iter().zip(&cols) {
            axpy(p, v.row(j), out_row);
        }
    }
    Ok(out)
}

/// Attention weights of every allowed pair as (row, column, weight) triples
/// in row-major order — the export hook behind attention heatmaps.
pub fn attention_weight_triples<T: Scalar>(
    q: &Mat<T>,
    k: &Mat<T>,
    pattern: &AttentionPattern,
    scale: T,
) -> Result<Vec<(usize, usize, T)>> {
    check_shapes(q, k, q, pattern.seq_len)?;
    let mut triples = Vec::new();
    for i in 0..pattern.seq_len {
        let cols = pattern.allowed_columns(i);
        let mut probs: Vec<T> = cols
            .iter()
            .map(|&j| scale * dot(q.row(i), k.row(j)))
            .collect();
        softmax_in_place(&mut probs);
        for (&p, &j) in probs.iter().zip(&cols) {
            triples.push((i, j, p));
        }
    }
    Ok(triples)
}

/// Gradients of [`sparse_attention`] with respect to its three inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads<T> {
    pub dq: Mat<T>,
    pub dk: Mat<T>,
    pub dv: Mat<T>,
}

/// Backward pass: recomputes the row softmaxes, then applies
/// ds_j = a_j·(da_j − Σ_m a_m·da_m) with da_j = dOut_i·V_j, and chains into
/// Q, K, V.
pub fn sparse_attention_backward<T: Scalar>(
    q: &Mat<T>,
    k: &Mat<T>,
    v: &Mat<T>,
    pattern: &AttentionPattern,
    scale: T,
    d_out: &Mat<T>,
) -> Result<AttentionGrads<T>> {
    check_shapes(q, k, v, pattern.seq_len)?;
    if d_out.rows() != pattern.seq_len || d_out.cols() != v.cols() {
        return Err(Error::invalid_input("d_out shape mismatch in attention backward"));
    }
    let mut grads = AttentionGrads {
        dq: Mat::zeros(q.rows(), q.cols()),
        dk: Mat::zeros(k.rows(), k.cols()),
        dv: Mat::zeros(v.rows(), v.cols()),
    };
    for i in 0..pattern.seq_len {
        let cols = pattern.allowed_columns(i);
        let mut probs: Vec<T> = cols
            .iter()
            .map(|&j| scale * dot(q.row(i), k.row(j)))
            .collect();
        softmax_in_place(&mut probs);

        let d_out_row = d_out.row(i).to_vec();
        let d_probs: Vec<T> = cols.iter().map(|&j| dot(&d_out_row, v.row(j))).collect();
        let weighted: T = probs
            .iter()
            .zip(&d_probs)
            .fold(T::zero(), |acc, (&a, &da)| acc + a * da);
        for ((&a, &da), &j) in probs.iter().zip(&d_probs).zip(&cols) {
            let ds = a * (da - weighted);
            axpy(scale * ds, k.row(j), grads.dq.row_mut(i));
            axpy(scale * ds, q.row(i), grads.dk.row_mut(j));
            axpy(a, &d_out_row, grads.dv.row_mut(j));
        }
    }
    Ok(grads)
}

/// Test oracle: full score matrix, disallowed entries forced to −∞, plain
/// dense softmax. Written independently of [`sparse_attention`] on purpose.
pub fn dense_reference_attention<T: Scalar>(
    q: &Mat<T>,
    k: &Mat<T>,
    v: &Mat<T>,
    mask: &AttentionMask,
    scale: T,
) -> Result<Mat<T>> {
    check_shapes(q, k, v, mask.seq_len)?;
    let l = mask.seq_len;
    let mut out = Mat::zeros(l, v.cols());
    for i in 0..l {
        let mut scores = vec![T::neg_infinity(); l];
        for j in 0..l {
            if mask.allows(i, j) {
                let mut s = T::zero();
                for (x, y) in q.row(i).iter().zip(k.row(j).iter()) {
                    s += *x * *y;
                }
                scores[j] = scale * s;
            }
        }
        // Row softmax; masked entries exponentiate to zero. Every row has
        // at least the diagonal allowed, so max is finite.
        let mut max = T::neg_infinity();
        for &s in &scores {
            if s > max {
                max = s;
            }
        }
        let mut sum = T::zero();
        let mut expd = vec![T::zero(); l];
        for j in 0..l {
            let e = (scores[j] - max).exp();
            expd[j] = e;
            sum += e;
        }
        for j in 0..l {
            let w = expd[j] / sum;
            for (o, &vv) in out.row_mut(i).iter_mut().zip(v.row(j).iter()) {
                *o += w * vv;
            }
        }
    }
    Ok(out)
}
