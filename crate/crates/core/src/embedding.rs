//! Input features: the per-token sum of word, position, token-type, and
//! AST-path embeddings.
//!
//! The AST-path term AE(t) walks the root-to-token path and sums learned
//! node-kind vectors. Two summation modes ship: `literal-edge-sum` sums the
//! vectors of both endpoints of every edge on the path (so interior nodes
//! count twice and the two endpoints once), and `deduplicated-path-sum`
//! counts each path node exactly once. The literal mode is the default; the
//! dedup mode exists because the double count may or may not be intended by
//! that formulation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::mat::{Mat, Scalar};
use crate::syntax::{clike, AstPath, SyntaxTree};
use crate::tokenizer::{is_special, TokenSequence};

/// How AE(t) accumulates node-kind vectors along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AstMode {
    /// Sum over both endpoints of every path edge: interior nodes twice,
    /// endpoints once; a single-node path has no edges and sums to zero.
    #[default]
    LiteralEdgeSum,
    /// Sum each path node once.
    DeduplicatedPathSum,
}

/// Node-kind label → embedding row lookup. Row 0 is reserved for unknown
/// kinds; known labels occupy rows `1..=len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct NodeKindVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl NodeKindVocab {
    /// Row index of kinds absent from the vocabulary.
    pub const UNKNOWN_INDEX: usize = 0;

    /// Builds a vocabulary from labels in a stable order; duplicates keep
    /// their first position.
    pub fn from_kinds<I, S>(kinds: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels = Vec::new();
        let mut index = HashMap::new();
        for kind in kinds {
            let kind: String = kind.into();
            if !index.contains_key(&kind) {
                index.insert(kind.clone(), 1 + labels.len());
                labels.push(kind);
            }
        }
        NodeKindVocab { labels, index }
    }

    /// The reference grammar's kinds.
    pub fn clike() -> Self {
        Self::from_kinds(clike::ALL_KINDS)
    }

    /// Embedding row for `kind`; unknown labels map to the reserved row.
    pub fn index_of(&self, kind: &str) -> usize {
        self.index.get(kind).copied().unwrap_or(Self::UNKNOWN_INDEX)
    }

    /// Number of embedding rows, the unknown row included.
    pub fn size(&self) -> usize {
        1 + self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl From<Vec<String>> for NodeKindVocab {
    fn from(labels: Vec<String>) -> Self {
        Self::from_kinds(labels)
    }
}

impl From<NodeKindVocab> for Vec<String> {
    fn from(vocab: NodeKindVocab) -> Self {
        vocab.labels
    }
}

/// Shape and behaviour of the embedding layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Model width d.
    pub model_dim: usize,
    /// Hard cap on sequence length; longer inputs are truncated.
    pub max_positions: usize,
    /// Rows in the token-type table; single-segment classification uses 1.
    pub num_token_types: usize,
    pub node_kind_vocab: NodeKindVocab,
    pub ast_mode: AstMode,
    /// When false, AE(t) is dropped entirely (the no-AST ablation).
    pub use_ast: bool,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            model_dim: 256,
            max_positions: 1024,
            num_token_types: 1,
            node_kind_vocab: NodeKindVocab::clike(),
            ast_mode: AstMode::default(),
            use_ast: true,
        }
    }
}

/// The four trainable lookup tables; every row is a d-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables<T> {
    /// vocab_size × d (WE).
    pub word: Mat<T>,
    /// max_positions × d (PE).
    pub position: Mat<T>,
    /// num_token_types × d (TT).
    pub token_type: Mat<T>,
    /// node-kind-vocab-size × d (vec(n) of AE).
    pub node_kind: Mat<T>,
}

impl<T: Scalar> EmbeddingTables<T> {
    pub fn zeros(vocab_size: usize, config: &EmbeddingConfig) -> Self {
        let d = config.model_dim;
        EmbeddingTables {
            word: Mat::zeros(vocab_size, d),
            position: Mat::zeros(config.max_positions, d),
            token_type: Mat::zeros(config.num_token_types, d),
            node_kind: Mat::zeros(config.node_kind_vocab.size(), d),
        }
    }
}

/// L × d input features, one row per (possibly truncated) token.
pub type FeatureMatrix<T> = Mat<T>;

/// Result of [`embed_sequence`] with the number of tokens dropped by the
/// max-positions cap.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedOutput<T> {
    pub features: FeatureMatrix<T>,
    pub truncated: usize,
}

/// Visits the node-kind rows of `path` with the multiplicity `mode`
/// dictates.
fn visit_path_rows(path: &AstPath, vocab: &NodeKindVocab, mode: AstMode, mut visit: impl FnMut(usize)) {
    match mode {
        AstMode::LiteralEdgeSum => {
            for edge in path.kinds.windows(2) {
                visit(vocab.index_of(&edge[0]));
                visit(vocab.index_of(&edge[1]));
            }
        }
        AstMode::DeduplicatedPathSum => {
            for kind in &path.kinds {
                visit(vocab.index_of(kind));
            }
        }
    }
}

/// AE(t): the summed node-kind vectors of one root-to-token path.
pub fn ast_path_embedding<T: Scalar>(
    path: &AstPath,
    tables: &EmbeddingTables<T>,
    vocab: &NodeKindVocab,
    mode: AstMode,
) -> Vec<T> {
    let mut out = vec![T::zero(); tables.node_kind.cols()];
    visit_path_rows(path, vocab, mode, |row| {
        crate::mat::axpy(T::one(), tables.node_kind.row(row), &mut out);
    });
    out
}

/// Maps each token to the AST path at its span's first byte; special tokens
/// (and tokens the tree cannot place) get `None`.
pub fn align_tokens_to_paths(tokens: &TokenSequence, tree: &SyntaxTree) -> Vec<Option<AstPath>> {
    tokens
        .ids
        .iter()
        .zip(&tokens.spans)
        .map(|(&id, &(start, _))| {
            if is_special(id) {
                None
            } else {
                tree.path_for_offset(start).ok()
            }
        })
        .collect()
}

/// Builds the feature matrix: row i = WE\[ids\[i\]\] + PE\[i\] + TT + AE.
///
/// `paths` must align index-for-index with `tokens` (see
/// [`align_tokens_to_paths`]). Sequences longer than `max_positions` are
/// truncated, with the number of dropped tokens reported in the output.
pub fn embed_sequence<T: Scalar>(
    tokens: &TokenSequence,
    paths: &[Option<AstPath>],
    tables: &EmbeddingTables<T>,
    config: &EmbeddingConfig,
) -> EmbedOutput<T> {
    let keep = tokens.len().min(config.max_positions);
    let truncated = tokens.len() - keep;
    if truncated > 0 {
        log::warn!(
            "embed_sequence: truncating {} of {} tokens to max_positions={}",
            truncated,
            tokens.len(),
            config.max_positions
        );
    }
    let mut features = Mat::zeros(keep, config.model_dim);
    for i in 0..keep {
        let row = features.row_mut(i);
        crate::mat::axpy(T::one(), tables.word.row(tokens.ids[i] as usize), row);
        crate::mat::axpy(T::one(), tables.position.row(i), row);
        // Single-segment classification: every token is type 0.
        crate::mat::axpy(T::one(), tables.token_type.row(0), row);
        if config.use_ast {
            if let Some(Some(path)) = paths.get(i) {
                visit_path_rows(path, &config.node_kind_vocab, config.ast_mode, |kind_row| {
                    crate::mat::axpy(T::one(), tables.node_kind.row(kind_row), row);
                });
            }
        }
    }
    EmbedOutput { features, truncated }
}

/// Accumulates table gradients for [`embed_sequence`]: `d_features` is the
/// loss gradient of the feature matrix, `grads` receives `+=` updates.
pub fn embed_sequence_backward<T: Scalar>(
    tokens: &TokenSequence,
    paths: &[Option<AstPath>],
    config: &EmbeddingConfig,
    d_features: &Mat<T>,
    grads: &mut EmbeddingTables<T>,
) {
    let keep = tokens.len().min(config.max_positions);
    debug_assert_eq!(d_features.rows(), keep);
    for i in 0..keep {
        let d_row = d_features.row(i).to_vec();
        crate::mat::axpy(T::one(), &d_row, grads.word.row_mut(tokens.ids[i] as usize));
        crate::mat::axpy(T::one(), &d_row, grads.position.row_mut(i));
        crate::mat::axpy(T::one(), &d_row, grads.token_type.row_mut(0));
        if config.use_ast {
            if let Some(Some(path)) = paths.get(i) {
                visit_path_rows(path, &config.node_kind_vocab, config.ast_mode, |kind_row| {
                    crate::mat::axpy(T::one(), &d_row, grads.node_kind.row_mut(kind_row));
                });
            }
        }
    }
}
