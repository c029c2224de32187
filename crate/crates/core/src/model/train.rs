//! The training loop: adaptive-moment optimization with linear warmup,
//! per-epoch validation, and best-F1 checkpoint selection.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::confusion_at_threshold;
use crate::model::checkpoint::{vocabulary_hash, Checkpoint};
use crate::model::input::{prepare, PreparedSample};
use crate::model::net::{backward_sample, forward_cached};
use crate::model::{LossKind, ModelConfig, ModelParams};
use crate::objective::{
    cross_entropy, cross_entropy_grad_logits, focal_loss, focal_loss_grad_logits,
};
use crate::syntax::SyntaxTree;
use crate::tokenizer::{TokenSequence, Vocabulary};

const ADAM_BETA1: f32 = 0.9;
const ADAM_BETA2: f32 = 0.999;
const ADAM_EPS: f32 = 1e-8;

/// One training or validation example: an encoded function with its parse
/// tree and ground-truth label.
#[derive(Debug, Clone)]
pub struct LabeledSequence {
    pub id: String,
    pub tokens: TokenSequence,
    pub tree: Option<SyntaxTree>,
    pub label: bool,
}

/// Optimizer-side knobs, separate from the model architecture.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of total steps spent linearly ramping the learning rate.
    pub warmup_fraction: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            learning_rate: 1e-4,
            batch_size: 8,
            epochs: 5,
            warmup_fraction: 0.1,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid_input(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid_input("batch_size must be ≥ 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid_input("epochs must be ≥ 1"));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid_input(format!(
                "warmup_fraction must lie in [0, 1], got {}",
                self.warmup_fraction
            )));
        }
        Ok(())
    }
}

/// Loss and validation quality after one pass over the training set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

/// The selected checkpoint plus the full per-epoch log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    /// 1-based epoch whose validation F1 won.
    pub best_epoch: usize,
}

struct AdamState {
    m: ModelParams<f32>,
    v: ModelParams<f32>,
    t: u64,
}

impl AdamState {
    fn new(config: &ModelConfig, vocab_size: usize) -> Self {
        AdamState {
            m: ModelParams::zeros(config, vocab_size),
            v: ModelParams::zeros(config, vocab_size),
            t: 0,
        }
    }
}

/// One adaptive-moment update with bias correction.
fn adam_step(
    params: &mut ModelParams<f32>,
    grads: &ModelParams<f32>,
    state: &mut AdamState,
    lr: f32,
) {
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    let mut p_tensors = params.tensors_mut();
    let mut m_tensors = state.m.tensors_mut();
    let mut v_tensors = state.v.tensors_mut();
    let g_tensors = grads.tensors();
    for i in 0..p_tensors.len() {
        debug_assert_eq!(p_tensors[i].0, g_tensors[i].0);
        let p = p_tensors[i].1.data_mut();
        let m = m_tensors[i].1.data_mut();
        let v = v_tensors[i].1.data_mut();
        let g = g_tensors[i].1.data();
        for j in 0..p.len() {
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Linear warmup to the base rate, then constant.
fn lr_at(step: u64, warmup_steps: u64, base: f64) -> f32 {
    if warmup_steps > 0 && step <= warmup_steps {
        (base * step as f64 / warmup_steps as f64) as f32
    } else {
        base as f32
    }
}

/// In-place Fisher–Yates shuffle, deterministic under the given rng.
fn shuffle(indices: &mut [usize], rng: &mut ChaCha20Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}

fn batch_objective(
    config: &ModelConfig,
    probs: &[f32],
    labels: &[bool],
) -> Result<(f32, Vec<f32>)> {
    match config.loss {
        LossKind::Focal => Ok((
            focal_loss(probs, labels, &config.focal)?,
            focal_loss_grad_logits(probs, labels, &config.focal)?,
        )),
        LossKind::CrossEntropy => Ok((
            cross_entropy(probs, labels)?,
            cross_entropy_grad_logits(probs, labels)?,
        )),
    }
}

/// Trains from random initialization and returns the checkpoint of the
/// epoch with the best validation F1, along with the full metrics log.
///
/// Deterministic given the config seed: initialization, epoch shuffles, and
/// (when enabled) dropout all draw from one seeded stream, single-threaded.
pub fn train(
    train_set: &[LabeledSequence],
    val_set: &[LabeledSequence],
    config: &ModelConfig,
    options: &TrainOptions,
    vocab: &Vocabulary,
) -> Result<TrainOutcome> {
    config.validate()?;
    options.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidDataset("empty training set".into()));
    }
    let positives = train_set.iter().filter(|s| s.label).count();
    if positives == 0 || positives == train_set.len() {
        return Err(Error::InvalidDataset(format!(
            "training set holds only one class ({positives} of {} positive)",
            train_set.len()
        )));
    }
    if val_set.is_empty() {
        return Err(Error::InvalidDataset(
            "empty validation set; best-epoch selection needs one".into(),
        ));
    }

    let prep = |s: &LabeledSequence| (prepare(&s.tokens, s.tree.as_ref(), config), s.label);
    let train_prepared: Vec<(PreparedSample, bool)> = train_set.iter().map(prep).collect();
    let val_prepared: Vec<(PreparedSample, bool)> = val_set.iter().map(prep).collect();

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::<f32>::init(config, vocab.vocab_size(), &mut rng);
    let mut adam = AdamState::new(config, vocab.vocab_size());
    let mut grads = ModelParams::<f32>::zeros(config, vocab.vocab_size());

    let n = train_prepared.len();
    let steps_per_epoch = n.div_ceil(options.batch_size);
    let total_steps = (options.epochs * steps_per_epoch) as u64;
    let warmup_steps = (total_steps as f64 * options.warmup_fraction).ceil() as u64;

    let mut best: Option<(f64, usize, u64, ModelParams<f32>)> = None;
    let mut metrics = Vec::with_capacity(options.epochs);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut step = 0u64;

    for epoch in 1..=options.epochs {
        shuffle(&mut indices, &mut rng);
        let mut loss_weighted = 0.0f64;
        for batch in indices.chunks(options.batch_size) {
            step += 1;
            let lr = lr_at(step, warmup_steps, options.learning_rate);
            let mut caches = Vec::with_capacity(batch.len());
            let mut probs = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for &i in batch {
                let (sample, label) = &train_prepared[i];
                let dropout_rng = (config.dropout > 0.0).then_some(&mut rng);
                let cache = forward_cached(&params, config, sample, dropout_rng)?;
                probs.push(cache.prob);
                labels.push(*label);
                caches.push(cache);
            }
            let (loss, d_logits) = batch_objective(config, &probs, &labels)?;
            loss_weighted += loss as f64 * batch.len() as f64;
            grads.zero_all();
            for ((&i, cache), &d_logit) in batch.iter().zip(&caches).zip(&d_logits) {
                backward_sample(&params, config, &train_prepared[i].0, cache, d_logit, &mut grads);
            }
            adam_step(&mut params, &grads, &mut adam, lr);
        }
        let train_loss = loss_weighted / n as f64;

        let mut val_probs = Vec::with_capacity(val_prepared.len());
        let mut val_labels = Vec::with_capacity(val_prepared.len());
        for (sample, label) in &val_prepared {
            val_probs.push(forward_cached(&params, config, sample, None)?.prob);
            val_labels.push(*label);
        }
        let (val_loss, _) = batch_objective(config, &val_probs, &val_labels)?;
        let val_probs_f64: Vec<f64> = val_probs.iter().map(|&p| p as f64).collect();
        let quality = confusion_at_threshold(&val_probs_f64, &val_labels, 0.5);
        log::info!(
            "epoch {epoch}: train_loss={train_loss:.6} val_loss={val_loss:.6} val_f1={:.4}",
            quality.f1
        );
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            val_loss: val_loss as f64,
            val_precision: quality.precision,
            val_recall: quality.recall,
            val_f1: quality.f1,
        });
        let improved = best.as_ref().is_none_or(|(f1, ..)| quality.f1 > *f1);
        if improved {
            best = Some((quality.f1, epoch, step, params.clone()));
        }
    }

    let (_, best_epoch, best_step, best_params) =
        best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params: best_params,
            config: config.clone(),
            vocab_hash: vocabulary_hash(vocab),
            step: best_step,
        },
        metrics,
        best_epoch,
    })
}

/// Ranks samples by predicted vulnerability: descending probability, ties
/// broken by ascending sample id.
pub fn predict(
    checkpoint: &Checkpoint,
    samples: &[(String, PreparedSample)],
) -> Result<Vec<(String, f64)>> {
    let mut seen = std::collections::BTreeSet::new();
    for (id, _) in samples {
        if !seen.insert(id.as_str()) {
            return Err(Error::invalid_input(format!("duplicate sample id {id}")));
        }
    }
    let mut out = Vec::with_capacity(samples.len());
    for (id, sample) in samples {
        let prob = forward_cached(&checkpoint.params, &checkpoint.config, sample, None)?.prob;
        out.push((id.clone(), prob as f64));
    }
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("sigmoid outputs are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(out)
}
