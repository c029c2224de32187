//! Function-level vulnerability dataset construction and a long-sequence
//! classifier over source code.
//!
//! The crate is organised around a pipeline:
//!
//! 1. [`dataset`] turns an advisory dump plus fix patches into labelled,
//!    deduplicated function samples (pre-patch = vulnerable, post-patch =
//!    fixed), with advisory-level train/val/test splitting.
//! 2. [`tokenizer`] trains and applies a byte-level BPE vocabulary so any
//!    source file round-trips exactly.
//! 3. [`syntax`] parses source into lightweight syntax trees and maps each
//!    token to its root-to-token path of node kinds.
//! 4. [`embedding`] combines word, position, token-type, and syntax-path
//!    embeddings into the model input.
//! 5. [`attention`] implements windowed/dilated sparse attention with global
//!    tokens, next to a dense reference used for verification.
//! 6. [`model`] is a hand-written transformer encoder (forward and backward)
//!    trained with Adam; [`objective`] supplies focal loss and cross-entropy.
//! 7. [`eval`] ranks predictions and computes hits@k / recall / F1.

pub mod attention;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod mat;
pub mod model;
pub mod objective;
pub mod syntax;
pub mod tokenizer;

pub use error::{Error, Result};
