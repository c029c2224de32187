//! The end-to-end classifier: embedding layer → stacked encoder layers with
//! sparse long attention → start-token pooling into a sigmoid head.
//!
//! Submodules split the concerns: [`input`] turns token sequences and syntax
//! trees into model-ready samples, [`net`] holds the forward/backward pass,
//! [`train`] the optimizer loop, and [`checkpoint`] the on-disk artifact
//! format.

pub mod checkpoint;
pub mod input;
pub mod net;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedding::{AstMode, EmbeddingConfig, EmbeddingTables, NodeKindVocab};
use crate::error::{Error, Result};
use crate::mat::{Mat, Scalar};
use crate::objective::FocalConfig;

pub use checkpoint::{vocabulary_hash, Checkpoint};
pub use input::{GlobalPolicy, PreparedSample};
pub use net::{forward_sample, ForwardResult};
pub use train::{predict, train, EpochMetrics, LabeledSequence, TrainOptions, TrainOutcome};

/// Which objective drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    Focal,
    CrossEntropy,
}

/// Every architectural and ablation knob of the classifier.
///
/// Defaults are the desk-scale configuration: small enough to train on one
/// workstation, structured the same way as the full-size model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder layer count.
    pub layers: usize,
    /// Attention heads per layer; must divide `model_dim`.
    pub heads: usize,
    /// Model width d.
    pub model_dim: usize,
    /// Hidden width of the position-wise feed-forward block.
    pub ffn_dim: usize,
    /// Sliding-window attention span (total, both sides); must be even.
    pub window: usize,
    /// Per-layer window dilation. Empty = 1 everywhere; a single entry
    /// applies to all layers; otherwise one entry per layer.
    pub dilation: Vec<usize>,
    /// Hard cap on sequence length (after truncation).
    pub max_positions: usize,
    /// Dropout rate on the residual branches during training.
    pub dropout: f64,
    /// Ablation: add AST-path embeddings to the input features.
    pub use_ast: bool,
    /// Ablation: sparse long attention; `false` lets every token attend to
    /// every other (plain self-attention).
    pub long_attention: bool,
    /// Ablation: training objective.
    pub loss: LossKind,
    pub focal: FocalConfig,
    /// Which tokens get global attention.
    pub global_policy: GlobalPolicy,
    /// How AST paths are folded into one vector.
    pub ast_mode: AstMode,
    /// Node-kind inventory backing the AST embedding table.
    #[serde(default = "NodeKindVocab::clike")]
    pub node_kind_vocab: NodeKindVocab,
    /// Seed for initialization, shuffling, and dropout.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 4,
            heads: 4,
            model_dim: 256,
            ffn_dim: 1024,
            window: 64,
            dilation: Vec::new(),
            max_positions: 1024,
            dropout: 0.0,
            use_ast: true,
            long_attention: true,
            loss: LossKind::Focal,
            focal: FocalConfig::default(),
            global_policy: GlobalPolicy::default(),
            ast_mode: AstMode::default(),
            node_kind_vocab: NodeKindVocab::clike(),
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.model_dim == 0 || self.ffn_dim == 0 {
            return Err(Error::invalid_input(
                "layers, heads, model_dim, and ffn_dim must all be positive",
            ));
        }
        if self.model_dim % self.heads != 0 {
            return Err(Error::invalid_input(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.window < 2 || self.window % 2 != 0 {
            return Err(Error::invalid_input(format!(
                "window must be even and ≥ 2, got {}",
                self.window
            )));
        }
        if !(self.dilation.is_empty()
            || self.dilation.len() == 1
            || self.dilation.len() == self.layers)
        {
            return Err(Error::invalid_input(format!(
                "dilation schedule has {} entries for {} layers",
                self.dilation.len(),
                self.layers
            )));
        }
        if self.dilation.iter().any(|&d| d == 0) {
            return Err(Error::invalid_input("dilation entries must be ≥ 1"));
        }
        if self.max_positions < 2 {
            // Room for the start and end markers around at least zero tokens.
            return Err(Error::invalid_input("max_positions must be ≥ 2"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid_input(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        self.focal.validate()
    }

    /// Dilation for one layer under the broadcast rules of `dilation`.
    pub fn dilation_for_layer(&self, layer: usize) -> usize {
        match self.dilation.len() {
            0 => 1,
            1 => self.dilation[0],
            _ => self.dilation[layer],
        }
    }

    /// Width of one attention head.
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    /// The embedding-layer view of this configuration.
    pub fn embedding_config(&self) -> EmbeddingConfig {
        EmbeddingConfig {
            model_dim: self.model_dim,
            max_positions: self.max_positions,
            num_token_types: 1,
            node_kind_vocab: self.node_kind_vocab.clone(),
            ast_mode: self.ast_mode,
            use_ast: self.use_ast,
        }
    }
}

/// One encoder layer's parameters. Projections are d×d, biases 1×width.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub wq: Mat<T>,
    pub bq: Mat<T>,
    pub wk: Mat<T>,
    pub bk: Mat<T>,
    pub wv: Mat<T>,
    pub bv: Mat<T>,
    pub wo: Mat<T>,
    pub bo: Mat<T>,
    pub ln1_gamma: Mat<T>,
    pub ln1_beta: Mat<T>,
    pub ffn_w1: Mat<T>,
    pub ffn_b1: Mat<T>,
    pub ffn_w2: Mat<T>,
    pub ffn_b2: Mat<T>,
    pub ln2_gamma: Mat<T>,
    pub ln2_beta: Mat<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(d: usize, ffn: usize) -> Self {
        LayerParams {
            wq: Mat::zeros(d, d),
            bq: Mat::zeros(1, d),
            wk: Mat::zeros(d, d),
            bk: Mat::zeros(1, d),
            wv: Mat::zeros(d, d),
            bv: Mat::zeros(1, d),
            wo: Mat::zeros(d, d),
            bo: Mat::zeros(1, d),
            ln1_gamma: Mat::zeros(1, d),
            ln1_beta: Mat::zeros(1, d),
            ffn_w1: Mat::zeros(d, ffn),
            ffn_b1: Mat::zeros(1, ffn),
            ffn_w2: Mat::zeros(ffn, d),
            ffn_b2: Mat::zeros(1, d),
            ln2_gamma: Mat::zeros(1, d),
            ln2_beta: Mat::zeros(1, d),
        }
    }
}

/// Every trainable tensor of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub embed: EmbeddingTables<T>,
    pub layers: Vec<LayerParams<T>>,
    /// d×1 classification head over the start token's hidden state.
    pub head_weight: Mat<T>,
    /// 1×1 head bias.
    pub head_bias: Mat<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero parameters of the right shapes. The AST node-kind table is
    /// only allocated when `use_ast` is on, so the no-AST ablation removes
    /// exactly `node_kind_vocab.size() × model_dim` parameters.
    pub fn zeros(config: &ModelConfig, vocab_size: usize) -> Self {
        let mut embed = EmbeddingTables::zeros(vocab_size, &config.embedding_config());
        if !config.use_ast {
            embed.node_kind = Mat::zeros(0, config.model_dim);
        }
        ModelParams {
            embed,
            layers: (0..config.layers)
                .map(|_| LayerParams::zeros(config.model_dim, config.ffn_dim))
                .collect(),
            head_weight: Mat::zeros(config.model_dim, 1),
            head_bias: Mat::zeros(1, 1),
        }
    }

    /// Random initialization: weights and embeddings ~ N(0, 0.02²), biases
    /// and the classification head zero, layer-norm gains one. The zero head
    /// makes a fresh model output probability exactly 0.5 everywhere.
    pub fn init(config: &ModelConfig, vocab_size: usize, rng: &mut ChaCha20Rng) -> Self {
        let mut params = Self::zeros(config, vocab_size);
        let normal = Normal::new(0.0f64, 0.02).expect("valid stddev");
        for (name, tensor) in params.tensors_mut() {
            match init_kind(&name) {
                InitKind::Normal => {
                    for v in tensor.data_mut() {
                        *v = T::from_f64(normal.sample(rng));
                    }
                }
                InitKind::One => tensor.data_mut().fill(T::one()),
                InitKind::Zero => {}
            }
        }
        params
    }

    /// Named views of every tensor, in a stable order shared with
    /// [`tensors_mut`](Self::tensors_mut) and the checkpoint format.
    pub fn tensors(&self) -> Vec<(String, &Mat<T>)> {
        let mut out: Vec<(String, &Mat<T>)> = vec![
            ("embed.word".into(), &self.embed.word),
            ("embed.position".into(), &self.embed.position),
            ("embed.token_type".into(), &self.embed.token_type),
        ];
        if self.embed.node_kind.rows() > 0 {
            out.push(("embed.node_kind".into(), &self.embed.node_kind));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            for (suffix, tensor) in layer_tensor_refs(layer) {
                out.push((format!("layer{i}.{suffix}"), tensor));
            }
        }
        out.push(("head.weight".into(), &self.head_weight));
        out.push(("head.bias".into(), &self.head_bias));
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Mat<T>)> {
        let mut out: Vec<(String, &mut Mat<T>)> = vec![
            ("embed.word".into(), &mut self.embed.word),
            ("embed.position".into(), &mut self.embed.position),
            ("embed.token_type".into(), &mut self.embed.token_type),
        ];
        if self.embed.node_kind.rows() > 0 {
            out.push(("embed.node_kind".into(), &mut self.embed.node_kind));
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (suffix, tensor) in layer_tensor_muts(layer) {
                out.push((format!("layer{i}.{suffix}"), tensor));
            }
        }
        out.push(("head.weight".into(), &mut self.head_weight));
        out.push(("head.bias".into(), &mut self.head_bias));
        out
    }

    /// Total scalar parameter count.
    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data().len()).sum()
    }

    /// Resets every tensor to zero in place (gradient-buffer reuse).
    pub fn zero_all(&mut self) {
        for (_, tensor) in self.tensors_mut() {
            tensor.data_mut().fill(T::zero());
        }
    }

    /// Vocabulary size implied by the word table.
    pub fn vocab_size(&self) -> usize {
        self.embed.word.rows()
    }

    /// Element-wise precision conversion (f32 checkpoints ↔ f64 checks).
    pub fn convert<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams {
            embed: EmbeddingTables {
                word: convert_mat(&self.embed.word),
                position: convert_mat(&self.embed.position),
                token_type: convert_mat(&self.embed.token_type),
                node_kind: convert_mat(&self.embed.node_kind),
            },
            layers: Vec::with_capacity(self.layers.len()),
            head_weight: convert_mat(&self.head_weight),
            head_bias: convert_mat(&self.head_bias),
        };
        for layer in &self.layers {
            out.layers.push(LayerParams {
                wq: convert_mat(&layer.wq),
                bq: convert_mat(&layer.bq),
                wk: convert_mat(&layer.wk),
                bk: convert_mat(&layer.bk),
                wv: convert_mat(&layer.wv),
                bv: convert_mat(&layer.bv),
                wo: convert_mat(&layer.wo),
                bo: convert_mat(&layer.bo),
                ln1_gamma: convert_mat(&layer.ln1_gamma),
                ln1_beta: convert_mat(&layer.ln1_beta),
                ffn_w1: convert_mat(&layer.ffn_w1),
                ffn_b1: convert_mat(&layer.ffn_b1),
                ffn_w2: convert_mat(&layer.ffn_w2),
                ffn_b2: convert_mat(&layer.ffn_b2),
                ln2_gamma: convert_mat(&layer.ln2_gamma),
                ln2_beta: convert_mat(&layer.ln2_beta),
            });
        }
        out
    }
}

fn convert_mat<T: Scalar, U: Scalar>(m: &Mat<T>) -> Mat<U> {
    Mat::from_vec(
        m.rows(),
        m.cols(),
        m.data().iter().map(|&v| U::from_f64(v.to_f64())).collect(),
    )
}

const LAYER_TENSOR_NAMES: [&str; 16] = [
    "attn.wq",
    "attn.bq",
    "attn.wk",
    "attn.bk",
    "attn.wv",
    "attn.bv",
    "attn.wo",
    "attn.bo",
    "ln1.gamma",
    "ln1.beta",
    "ffn.w1",
    "ffn.b1",
    "ffn.w2",
    "ffn.b2",
    "ln2.gamma",
    "ln2.beta",
];

fn layer_tensor_refs<T>(layer: &LayerParams<T>) -> Vec<(&'static str, &Mat<T>)> {
    LAYER_TENSOR_NAMES
        .into_iter()
        .zip([
            &layer.wq,
            &layer.bq,
            &layer.wk,
            &layer.bk,
            &layer.wv,
            &layer.bv,
            &layer.wo,
            &layer.bo,
            &layer.ln1_gamma,
            &layer.ln1_beta,
            &layer.ffn_w1,
            &layer.ffn_b1,
            &layer.ffn_w2,
            &layer.ffn_b2,
            &layer.ln2_gamma,
            &layer.ln2_beta,
        ])
        .collect()
}

fn layer_tensor_muts<T>(layer: &mut LayerParams<T>) -> Vec<(&'static str, &mut Mat<T>)> {
    LAYER_TENSOR_NAMES
        .into_iter()
        .zip([
            &mut layer.wq,
            &mut layer.bq,
            &mut layer.wk,
            &mut layer.bk,
            &mut layer.wv,
            &mut layer.bv,
            &mut layer.wo,
            &mut layer.bo,
            &mut layer.ln1_gamma,
            &mut layer.ln1_beta,
            &mut layer.ffn_w1,
            &mut layer.ffn_b1,
            &mut layer.ffn_w2,
            &mut layer.ffn_b2,
            &mut layer.ln2_gamma,
            &mut layer.ln2_beta,
        ])
        .collect()
}

enum InitKind {
    Normal,
    Zero,
    One,
}

/// Initialization rule by tensor name: layer-norm gains start at one, every
/// bias and the classification head at zero, everything else N(0, 0.02²).
fn init_kind(name: &str) -> InitKind {
    if name.ends_with(".gamma") {
        InitKind::One
    } else if name.starts_with("head.")
        || name.ends_with(".beta")
        || name.ends_with(".bq")
        || name.ends_with(".bk")
        || name.ends_with(".bv")
        || name.ends_with(".bo")
        || name.ends_with(".b1")
        || name.ends_with(".b2")
    {
        InitKind::Zero
    } else {
        InitKind::Normal
    }
}

/// Convenience constructor: validated config + seeded initialization.
pub fn initialize<T: Scalar>(config: &ModelConfig, vocab_size: usize) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    Ok(ModelParams::init(config, vocab_size, &mut rng))
}
