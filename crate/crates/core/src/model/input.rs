//! Turns raw token sequences and syntax trees into model-ready samples:
//! special-token framing, truncation, AST-path alignment, and the choice of
//! globally attending positions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionPattern;
use crate::embedding::align_tokens_to_paths;
use crate::error::Result;
use crate::model::ModelConfig;
use crate::syntax::{AstPath, SyntaxTree};
use crate::tokenizer::{is_special, TokenSequence, BOS_ID, EOS_ID};

/// Which positions attend to (and are attended by) the whole sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalPolicy {
    /// The start token plus the first token of every AST node near the root
    /// (depth ≤ 2): function heads, signatures, and top-level blocks.
    #[default]
    ClsAndTopLevel,
    /// Only the start token.
    ClsOnly,
    /// Every position — degenerates to full self-attention.
    AllTokens,
}

/// One classifier input: framed token ids, per-token AST paths, and the
/// global attention anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub tokens: TokenSequence,
    pub paths: Vec<Option<AstPath>>,
    pub globals: BTreeSet<usize>,
}

impl PreparedSample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Depth of a node below the root at which its first token still earns a
/// global slot under [`GlobalPolicy::ClsAndTopLevel`].
const TOP_LEVEL_DEPTH: usize = 2;

/// Builds a [`PreparedSample`] from an encoder output.
///
/// Existing special tokens (including padding) are stripped, the body is
/// truncated to fit `max_positions` with room for the start/end markers, and
/// the sequence is framed as `[bos] body [eos]`. Because padding never
/// survives this step, padded and unpadded encodings of the same source
/// prepare — and therefore classify — identically.
pub fn prepare(
    tokens: &TokenSequence,
    tree: Option<&SyntaxTree>,
    config: &ModelConfig,
) -> PreparedSample {
    let body: Vec<(u32, (usize, usize))> = tokens
        .ids
        .iter()
        .zip(&tokens.spans)
        .filter(|(&id, _)| !is_special(id))
        .map(|(&id, &span)| (id, span))
        .take(config.max_positions.saturating_sub(2))
        .collect();
    let mut ids = Vec::with_capacity(body.len() + 2);
    let mut spans = Vec::with_capacity(body.len() + 2);
    ids.push(BOS_ID);
    spans.push((0, 0));
    for (id, span) in body {
        ids.push(id);
        spans.push(span);
    }
    ids.push(EOS_ID);
    spans.push((0, 0));
    let tokens = TokenSequence { ids, spans };
    let paths = match tree {
        Some(tree) => align_tokens_to_paths(&tokens, tree),
        None => vec![None; tokens.len()],
    };
    let globals = global_indices(&tokens, tree, config.global_policy);
    PreparedSample {
        tokens,
        paths,
        globals,
    }
}

fn global_indices(
    tokens: &TokenSequence,
    tree: Option<&SyntaxTree>,
    policy: GlobalPolicy,
) -> BTreeSet<usize> {
    match policy {
        GlobalPolicy::AllTokens => (0..tokens.len()).collect(),
        GlobalPolicy::ClsOnly => BTreeSet::from([0]),
        GlobalPolicy::ClsAndTopLevel => {
            let mut globals = BTreeSet::from([0]);
            if let Some(tree) = tree {
                for span in top_level_spans(tree) {
                    if let Some(i) = first_token_in(tokens, span) {
                        globals.insert(i);
                    }
                }
            }
            globals
        }
    }
}

/// Spans of every node within [`TOP_LEVEL_DEPTH`] of the root.
fn top_level_spans(tree: &SyntaxTree) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut queue = vec![(tree.root(), 0usize)];
    while let Some((idx, depth)) = queue.pop() {
        let node = tree.node(idx);
        spans.push(node.span);
        if depth < TOP_LEVEL_DEPTH {
            queue.extend(node.children.iter().map(|&c| (c, depth + 1)));
        }
    }
    spans
}

/// First non-special token whose byte span intersects `span`, if any.
/// Zero-width spans (parser-inserted placeholders) intersect nothing.
fn first_token_in(tokens: &TokenSequence, span: (usize, usize)) -> Option<usize> {
    let (start, end) = span;
    tokens.ids.iter().zip(&tokens.spans).position(|(&id, &(s, e))| {
        !is_special(id) && s < end && e > start
    })
}

/// Attention pattern of one layer over a sample of length `seq_len`.
///
/// With `long_attention` off every position becomes global, i.e. plain
/// dense self-attention; the window setting is then irrelevant.
pub fn attention_pattern(
    seq_len: usize,
    globals: &BTreeSet<usize>,
    config: &ModelConfig,
    layer: usize,
) -> Result<AttentionPattern> {
    if config.long_attention {
        AttentionPattern::new(
            config.window,
            config.dilation_for_layer(layer),
            globals.iter().copied().filter(|&g| g < seq_len),
            seq_len,
        )
    } else {
        AttentionPattern::new(2, 1, 0..seq_len, seq_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::ParserRegistry;
    use crate::tokenizer::{Vocabulary, PAD_ID};

    fn byte_vocab() -> Vocabulary {
        crate::tokenizer::train_bpe(&[b"seed".to_vec()], 0).unwrap()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            layers: 2,
            heads: 2,
            model_dim: 8,
            ffn_dim: 16,
            window: 4,
            max_positions: 64,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn prepare_frames_body_with_markers() {
        let vocab = byte_vocab();
        let tokens = vocab.encode(b"ab");
        let sample = prepare(&tokens, None, &small_config());
        assert_eq!(sample.tokens.ids, vec![BOS_ID, 97, 98, EOS_ID]);
        assert_eq!(
            sample.tokens.spans,
            vec![(0, 0), (0, 1), (1, 2), (0, 0)]
        );
        assert_eq!(sample.paths, vec![None; 4]);
    }

    #[test]
    fn padding_never_reaches_the_model() {
        let vocab = byte_vocab();
        let mut padded = vocab.encode(b"ab");
        for _ in 0..7 {
            padded.ids.push(PAD_ID);
            padded.spans.push((0, 0));
        }
        let plain = prepare(&vocab.encode(b"ab"), None, &small_config());
        assert_eq!(prepare(&padded, None, &small_config()), plain);
    }

    #[test]
    fn truncation_keeps_the_end_marker() {
        let vocab = byte_vocab();
        let tokens = vocab.encode(&vec![b'x'; 100]);
        let config = ModelConfig {
            max_positions: 10,
            ..small_config()
        };
        let sample = prepare(&tokens, None, &config);
        assert_eq!(sample.len(), 10);
        assert_eq!(sample.tokens.ids[0], BOS_ID);
        assert_eq!(*sample.tokens.ids.last().unwrap(), EOS_ID);
        assert_eq!(sample.tokens.ids[1..9], [b'x' as u32; 8].map(u32::from));
    }

    #[test]
    fn cls_only_and_all_tokens_policies() {
        let vocab = byte_vocab();
        let tokens = vocab.encode(b"abc");
        let cls = prepare(
            &tokens,
            None,
            &ModelConfig {
                global_policy: GlobalPolicy::ClsOnly,
                ..small_config()
            },
        );
        assert_eq!(cls.globals, BTreeSet::from([0]));
        let all = prepare(
            &tokens,
            None,
            &ModelConfig {
                global_policy: GlobalPolicy::AllTokens,
                ..small_config()
            },
        );
        assert_eq!(all.globals, (0..5).collect::<BTreeSet<_>>());
    }

    #[test]
    fn top_level_anchors_cover_function_structure() {
        let source = b"int f() { return 1; }";
        let vocab = byte_vocab();
        let tree = ParserRegistry::default().parse(source, "clike").unwrap();
        let sample = prepare(&vocab.encode(source), Some(&tree), &small_config());
        // Byte tokens sit at prepared index byte+1 (bos shift). Depth ≤ 2
        // nodes: translation_unit/function_definition/type_specifier start
        // at byte 0, identifier at 4, parameter_list at 5, block at 8.
        assert_eq!(sample.globals, BTreeSet::from([0, 1, 5, 6, 9]));
    }

    #[test]
    fn missing_tree_degrades_to_cls_anchor() {
        let vocab = byte_vocab();
        let sample = prepare(&vocab.encode(b"abc"), None, &small_config());
        assert_eq!(sample.globals, BTreeSet::from([0]));
    }

    #[test]
    fn paths_align_with_prepared_tokens() {
        let source = b"int f() { return 1; }";
        let vocab = byte_vocab();
        let tree = ParserRegistry::default().parse(source, "clike").unwrap();
        let sample = prepare(&vocab.encode(source), Some(&tree), &small_config());
        assert!(sample.paths[0].is_none(), "bos has no path");
        assert!(sample.paths.last().unwrap().is_none(), "eos has no path");
        let first = sample.paths[1].as_ref().expect("body token has a path");
        assert_eq!(first.kinds.first().map(String::as_str), Some("translation_unit"));
    }

    #[test]
    fn self_attention_ablation_allows_every_pair() {
        let config = ModelConfig {
            long_attention: false,
            ..small_config()
        };
        let pattern = attention_pattern(9, &BTreeSet::from([0]), &config, 0).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                assert!(pattern.allows(i, j));
            }
        }
    }

    #[test]
    fn pattern_uses_layer_dilation() {
        let config = ModelConfig {
            dilation: vec![1, 3],
            ..small_config()
        };
        let globals = BTreeSet::from([0]);
        let l0 = attention_pattern(32, &globals, &config, 0).unwrap();
        let l1 = attention_pattern(32, &globals, &config, 1).unwrap();
        assert_eq!(l0.dilation(), 1);
        assert_eq!(l1.dilation(), 3);
        assert!(l0.allows(16, 17));
        assert!(!l1.allows(16, 17));
        assert!(l1.allows(16, 19));
    }

    #[test]
    fn oversized_globals_are_dropped_after_truncation() {
        let config = ModelConfig {
            max_positions: 6,
            global_policy: GlobalPolicy::AllTokens,
            ..small_config()
        };
        let vocab = byte_vocab();
        let sample = prepare(&vocab.encode(&vec![b'x'; 50]), None, &config);
        assert_eq!(sample.len(), 6);
        assert!(attention_pattern(sample.len(), &sample.globals, &config, 0).is_ok());
    }
}
