//! Checkpoint file: magic `PAUTH1`, a length-prefixed JSON header (version,
//! model config, label names, metadata, tensor directory with byte offsets),
//! then raw little-endian 32-bit float tensor payloads in directory order.
//!
//! Tensor values pass through f32 on disk; loading widens back to f64, so a
//! checkpoint is idempotent after the first save (save ∘ load ∘ save is
//! byte-identical).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::{ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"PAUTH1";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    /// Byte offset into the payload region.
    offset: u64,
    /// Element count (each element is 4 bytes).
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    label_names: Vec<String>,
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// A loaded checkpoint: parameters plus the label directory and metadata
/// that were stored alongside them.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub label_names: Vec<String>,
    pub metadata: serde_json::Value,
}

pub fn save_checkpoint(
    params: &ModelParams,
    label_names: &[String],
    metadata: serde_json::Value,
    path: impl AsRef<Path>,
) -> Result<(), TrainError> {
    let names = ModelParams::tensor_names(&params.config);
    let tensors = params.tensors();
    debug_assert_eq!(names.len(), tensors.len());
    let mut directory = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in names.iter().zip(&tensors) {
        directory.push(TensorEntry { name: name.clone(), offset, len: t.len() as u64 });
        offset += 4 * t.len() as u64;
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        config: params.config.clone(),
        label_names: label_names.to_vec(),
        metadata,
        tensors: directory,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(header_json.len() as u32).to_le_bytes())?;
    out.write_all(&header_json)?;
    for t in tensors {
        for &v in t {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, TrainError> {
    let bytes = std::fs::read(path)?;
    let corrupt = |msg: &str| TrainError::CorruptCheckpoint(msg.to_string());
    if bytes.len() < CHECKPOINT_MAGIC.len() + 4 {
        return Err(corrupt("file shorter than magic and header length"));
    }
    if &bytes[..6] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let payload_start = 10 + header_len;
    if bytes.len() < payload_start {
        return Err(corrupt("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[10..payload_start])
        .map_err(|e| corrupt(&format!("unreadable header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(TrainError::VersionMismatch {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    header.config.validate()?;

    let expected_names = ModelParams::tensor_names(&header.config);
    if header.tensors.len() != expected_names.len() {
        return Err(corrupt("tensor directory does not match the model config"));
    }
    let payload_len: u64 = header.tensors.iter().map(|t| 4 * t.len).sum();
    if bytes.len() as u64 != payload_start as u64 + payload_len {
        return Err(corrupt(&format!(
            "file has {} bytes, header implies {}",
            bytes.len(),
            payload_start as u64 + payload_len
        )));
    }

    let mut params = ModelParams::zeros(&header.config);
    {
        let mut tensors = params.tensors_mut();
        for (i, entry) in header.tensors.iter().enumerate() {
            if entry.name != expected_names[i] {
                return Err(corrupt(&format!(
                    "tensor {i} named `{}`, expected `{}`",
                    entry.name, expected_names[i]
                )));
            }
            let t = &mut tensors[i];
            if entry.len as usize != t.len() {
                return Err(corrupt(&format!(
                    "tensor `{}` holds {} elements, config implies {}",
                    entry.name,
                    entry.len,
                    t.len()
                )));
            }
            let base = payload_start + entry.offset as usize;
            if base + 4 * t.len() > bytes.len() {
                return Err(corrupt(&format!("tensor `{}` overruns the file", entry.name)));
            }
            for (j, v) in t.iter_mut().enumerate() {
                let o = base + 4 * j;
                *v = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
            }
        }
    }
    Ok(Checkpoint { params, label_names: header.label_names, metadata: header.metadata })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample_params() -> ModelParams {
        let cfg = ModelConfig::new(2, 5, 3).with_hidden(4).with_layers(2);
        ModelParams::init(&cfg, 42)
    }

    #[test]
    fn round_trip_is_idempotent_at_f32_precision() {
        let params = sample_params();
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("m1.ckpt");
        let p2 = dir.path().join("m2.ckpt");

        save_checkpoint(&params, &labels, json!({"note": "test"}), &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        assert_eq!(loaded.label_names, labels);
        assert_eq!(loaded.metadata["note"], "test");
        // every tensor survives at the checkpoint's f32 precision
        for (a, b) in params.tensors().iter().zip(loaded.params.tensors()) {
            for (&va, &vb) in a.iter().zip(b.iter()) {
                assert_eq!(va as f32, vb as f32);
            }
        }
        // a second save/load cycle is bit-exact end to end
        save_checkpoint(&loaded.params, &labels, json!({"note": "test"}), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let reloaded = load_checkpoint(&p2).unwrap();
        assert_eq!(reloaded.params, loaded.params);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let params = sample_params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&params, &["x".into()], json!({}), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(TrainError::CorruptCheckpoint(_))));
    }

    #[test]
    fn bad_magic_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        std::fs::write(&path, b"NOTAPULSECHECKPOINT").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(TrainError::CorruptCheckpoint(_))));
    }

    #[test]
    fn future_version_is_rejected() {
        let params = sample_params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&params, &["x".into()], json!({}), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // bump the version field inside the JSON header
        let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let header = String::from_utf8(bytes[10..10 + header_len].to_vec()).unwrap();
        let bumped = header.replace("\"version\":1", "\"version\":9");
        assert_ne!(header, bumped);
        bytes.splice(10..10 + header_len, bumped.into_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(TrainError::VersionMismatch { found: 9, expected: 1 })
        ));
    }
}
