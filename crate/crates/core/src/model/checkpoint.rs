//! On-disk model artifacts.
//!
//! Layout: an 8-byte magic string, a little-endian u64 manifest length, a
//! JSON manifest (config, vocabulary hash, step counter, tensor directory),
//! then the raw tensor data as little-endian 32-bit floats. Tensor entries
//! name their byte offset into the data section, so readers can seek
//! without trusting file order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tokenizer::{serialize_vocab, Vocabulary};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VSEQCKP1";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// SHA-256 of the vocabulary's serialized text form, lowercase hex — the
/// compatibility key tying a checkpoint to the tokenizer it was trained
/// with.
pub fn vocabulary_hash(vocab: &Vocabulary) -> String {
    let digest = Sha256::digest(serialize_vocab(vocab).as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        write!(hex, "{byte:02x}").expect("writing to a String cannot fail");
    }
    hex
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    /// rows × cols.
    shape: [usize; 2],
    /// Byte offset into the data section.
    offset: u64,
    /// Element count (each element is 4 bytes).
    len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    vocab_hash: String,
    step: u64,
    tensors: Vec<TensorEntry>,
}

/// Cap on the total parameter count a loaded manifest may imply (≈4 GB of
/// f32 data) so a corrupt or hostile file cannot trigger huge allocations.
const MAX_CHECKPOINT_ELEMENTS: u128 = 1 << 30;

/// Upper bound on the scalar parameters a config implies, computed without
/// allocating anything.
fn parameter_budget(config: &ModelConfig, vocab_size: usize) -> u128 {
    let d = config.model_dim as u128;
    let ffn = config.ffn_dim as u128;
    let embed = (vocab_size as u128 + config.max_positions as u128 + 1) * d
        + if config.use_ast {
            config.node_kind_vocab.size() as u128 * d
        } else {
            0
        };
    let per_layer = 4 * d * d + 4 * d  // attention projections and biases
        + 2 * 2 * d                    // two layer norms
        + d * ffn + ffn + ffn * d + d; // feed-forward weights and biases
    embed + config.layers as u128 * per_layer + d + 1
}

/// A trained model: parameters plus everything needed to reuse them.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub config: ModelConfig,
    pub vocab_hash: String,
    /// Optimizer steps taken to produce these parameters.
    pub step: u64,
}

impl Checkpoint {
    /// Errors unless `vocab` is the vocabulary this model was trained with.
    pub fn verify_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        let actual = vocabulary_hash(vocab);
        if actual != self.vocab_hash {
            return Err(Error::IncompatibleArtifact(format!(
                "vocabulary hash {actual} does not match the checkpoint's {}",
                self.vocab_hash
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.config.validate()?;
        let tensors = self.params.tensors();
        let mut entries = Vec::with_capacity(tensors.len());
        let mut offset = 0u64;
        let mut data = Vec::new();
        for (name, tensor) in &tensors {
            let len = tensor.data().len() as u64;
            entries.push(TensorEntry {
                name: name.clone(),
                shape: [tensor.rows(), tensor.cols()],
                offset,
                len,
            });
            for &v in tensor.data() {
                data.extend_from_slice(&v.to_le_bytes());
            }
            offset += len * 4;
        }
        let manifest = Manifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            step: self.step,
            tensors: entries,
        };
        let manifest_bytes = serde_json::to_vec(&manifest)?;
        let mut file = Vec::with_capacity(16 + manifest_bytes.len() + data.len());
        file.extend_from_slice(CHECKPOINT_MAGIC);
        file.extend_from_slice(&(manifest_bytes.len() as u64).to_le_bytes());
        file.extend_from_slice(&manifest_bytes);
        file.extend_from_slice(&data);
        fs::write(path, file)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    /// Decodes a checkpoint from raw bytes, rejecting anything malformed
    /// with an incompatible-artifact error rather than a panic.
    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let incompatible = |msg: &str| Error::IncompatibleArtifact(msg.to_string());
        if bytes.len() < 16 {
            return Err(incompatible("file too short for a checkpoint header"));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(incompatible("not a checkpoint file (bad magic)"));
        }
        let manifest_len =
            u64::from_le_bytes(bytes[8..16].try_into().expect("8-byte slice")) as usize;
        let manifest_end = 16usize
            .checked_add(manifest_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| incompatible("manifest length exceeds the file"))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[16..manifest_end])
            .map_err(|e| Error::IncompatibleArtifact(format!("unreadable manifest: {e}")))?;
        if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::IncompatibleArtifact(format!(
                "unsupported checkpoint format version {}",
                manifest.format_version
            )));
        }
        manifest.config.validate()?;
        let data = &bytes[manifest_end..];

        let word = manifest
            .tensors
            .iter()
            .find(|t| t.name == "embed.word")
            .ok_or_else(|| incompatible("manifest lacks the word embedding tensor"))?;
        let vocab_size = word.shape[0];
        if parameter_budget(&manifest.config, vocab_size) > MAX_CHECKPOINT_ELEMENTS {
            return Err(incompatible(
                "checkpoint dimensions exceed the loader's allocation budget",
            ));
        }
        let mut params = ModelParams::<f32>::zeros(&manifest.config, vocab_size);
        let expected = params.tensors_mut();
        if expected.len() != manifest.tensors.len() {
            return Err(Error::IncompatibleArtifact(format!(
                "checkpoint holds {} tensors, the configuration implies {}",
                manifest.tensors.len(),
                expected.len()
            )));
        }
        for (name, tensor) in expected {
            let entry = manifest
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| {
                    Error::IncompatibleArtifact(format!("checkpoint lacks tensor {name}"))
                })?;
            if entry.shape != [tensor.rows(), tensor.cols()]
                || entry.len != tensor.data().len() as u64
            {
                return Err(Error::IncompatibleArtifact(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    entry.shape,
                    [tensor.rows(), tensor.cols()]
                )));
            }
            let start = usize::try_from(entry.offset)
                .map_err(|_| incompatible("tensor offset overflows"))?;
            let byte_len = usize::try_from(entry.len * 4)
                .map_err(|_| incompatible("tensor length overflows"))?;
            let end = start
                .checked_add(byte_len)
                .filter(|&end| end <= data.len())
                .ok_or_else(|| {
                    Error::IncompatibleArtifact(format!(
                        "tensor {name} extends past the data section"
                    ))
                })?;
            for (dst, chunk) in tensor
                .data_mut()
                .iter_mut()
                .zip(data[start..end].chunks_exact(4))
            {
                *dst = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            }
        }
        Ok(Checkpoint {
            params,
            config: manifest.config,
            vocab_hash: manifest.vocab_hash,
            step: manifest.step,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::input::prepare;
    use crate::model::net::forward_sample;
    use crate::model::{initialize, ModelConfig};
    use crate::tokenizer::train_bpe;

    fn small_config() -> ModelConfig {
        ModelConfig {
            layers: 2,
            heads: 2,
            model_dim: 8,
            ffn_dim: 16,
            window: 4,
            max_positions: 32,
            ..ModelConfig::default()
        }
    }

    fn small_checkpoint() -> (Checkpoint, Vocabulary) {
        let vocab = train_bpe(&[b"int f() { return 0; }".to_vec()], 8).unwrap();
        let config = small_config();
        let mut params = initialize::<f32>(&config, vocab.vocab_size()).unwrap();
        params.head_weight.data_mut().fill(0.2);
        (
            Checkpoint {
                params,
                config,
                vocab_hash: vocabulary_hash(&vocab),
                step: 123,
            },
            vocab,
        )
    }

    #[test]
    fn round_trip_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (checkpoint, vocab) = small_checkpoint();
        checkpoint.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.params, checkpoint.params);
        assert_eq!(loaded.config, checkpoint.config);
        assert_eq!(loaded.vocab_hash, checkpoint.vocab_hash);
        assert_eq!(loaded.step, 123);

        // Forward outputs must match bit for bit.
        let sample = prepare(&vocab.encode(b"int f() { return 0; }"), None, &loaded.config);
        let before = forward_sample(&checkpoint.params, &checkpoint.config, &sample, false)
            .unwrap()
            .prob;
        let after = forward_sample(&loaded.params, &loaded.config, &sample, false)
            .unwrap()
            .prob;
        assert_eq!(before.to_bits(), after.to_bits());
    }

    #[test]
    fn vocabulary_hash_gatekeeps_compatibility() {
        let (checkpoint, vocab) = small_checkpoint();
        checkpoint.verify_vocabulary(&vocab).unwrap();
        let other = train_bpe(&[b"something else".to_vec()], 4).unwrap();
        let err = checkpoint.verify_vocabulary(&other).unwrap_err();
        assert!(matches!(err, Error::IncompatibleArtifact(_)));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (checkpoint, _) = small_checkpoint();
        checkpoint.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad_magic),
            Err(Error::IncompatibleArtifact(_))
        ));
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 9]).is_err());
        assert!(Checkpoint::from_bytes(b"").is_err());
    }

    #[test]
    fn rejects_unknown_format_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (checkpoint, _) = small_checkpoint();
        checkpoint.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let manifest_len =
            u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut manifest: serde_json::Value =
            serde_json::from_slice(&bytes[16..16 + manifest_len]).unwrap();
        manifest["format_version"] = serde_json::json!(99);
        let new_manifest = serde_json::to_vec(&manifest).unwrap();
        let mut doctored = Vec::new();
        doctored.extend_from_slice(CHECKPOINT_MAGIC);
        doctored.extend_from_slice(&(new_manifest.len() as u64).to_le_bytes());
        doctored.extend_from_slice(&new_manifest);
        doctored.extend_from_slice(&bytes[16 + manifest_len..]);
        let err = Checkpoint::from_bytes(&doctored).unwrap_err();
        assert!(matches!(err, Error::IncompatibleArtifact(_)));
    }

    #[test]
    fn rejects_missing_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (checkpoint, _) = small_checkpoint();
        checkpoint.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let manifest_len =
            u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut manifest: serde_json::Value =
            serde_json::from_slice(&bytes[16..16 + manifest_len]).unwrap();
        let tensors = manifest["tensors"].as_array_mut().unwrap();
        tensors.retain(|t| t["name"] != "head.weight");
        let new_manifest = serde_json::to_vec(&manifest).unwrap();
        let mut doctored = Vec::new();
        doctored.extend_from_slice(CHECKPOINT_MAGIC);
        doctored.extend_from_slice(&(new_manifest.len() as u64).to_le_bytes());
        doctored.extend_from_slice(&new_manifest);
        doctored.extend_from_slice(&bytes[16 + manifest_len..]);
        let err = Checkpoint::from_bytes(&doctored).unwrap_err();
        assert!(matches!(err, Error::IncompatibleArtifact(_)));
    }

    #[test]
    fn hash_is_stable_and_vocabulary_sensitive() {
        let a = train_bpe(&[b"alpha beta".to_vec()], 4).unwrap();
        let b = train_bpe(&[b"alpha beta".to_vec()], 4).unwrap();
        assert_eq!(vocabulary_hash(&a), vocabulary_hash(&b));
        assert_eq!(vocabulary_hash(&a).len(), 64);
        let c = train_bpe(&[b"alpha beta".to_vec()], 5).unwrap();
        assert_ne!(vocabulary_hash(&a), vocabulary_hash(&c));
    }
}
