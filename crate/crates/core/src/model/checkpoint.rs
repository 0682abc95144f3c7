use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Tensor;

use super::{Model, ModelConfig, Params};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

const WEIGHTS_FILE: &str = "weights.f32";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the weights file.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    pub parameter_count: usize,
    pub weights_sha256: String,
    pub tensors: Vec<TensorEntry>,
}

/// Writes `dir/weights.f32` (named tensors as little-endian float32 in name
/// order) and `dir/manifest.json`.
pub fn save_checkpoint(dir: impl AsRef<Path>, model: &Model, seed: u64) -> Result<CheckpointManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::with_capacity(model.params().count() * 4);
    let mut tensors = Vec::new();
    for (name, t) in model.params().iter() {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset: bytes.len(),
        });
        for &v in t.data() {
            let f = v as f32;
            if f as f64 != v {
                return Err(Error::contract(format!("parameter {name} is not f32-representable")));
            }
            bytes.extend_from_slice(&f.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        seed,
        config: model.config().clone(),
        parameter_count: model.params().count(),
        weights_sha256: hex_sha256(&bytes),
        tensors,
    };
    let w = dir.join(WEIGHTS_FILE);
    std::fs::write(&w, &bytes).map_err(|e| Error::io(&w, e))?;
    let m = dir.join(MANIFEST_FILE);
    std::fs::write(&m, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&m, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(Model, CheckpointManifest)> {
    let dir = dir.as_ref();
    let m = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&m).map_err(|e| Error::io(&m, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            artifact: m.display().to_string(),
            expected: CHECKPOINT_SCHEMA_VERSION,
            found,
        });
    }
    let manifest: CheckpointManifest = serde_json::from_value(raw)?;
    let w = dir.join(WEIGHTS_FILE);
    let bytes = std::fs::read(&w).map_err(|e| Error::io(&w, e))?;
    if hex_sha256(&bytes) != manifest.weights_sha256 {
        return Err(Error::invalid("checkpoint", "weights checksum mismatch"));
    }
    let mut map = BTreeMap::new();
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let end = e.offset + 4 * n;
        if end > bytes.len() {
            return Err(Error::invalid("checkpoint", format!("tensor {} exceeds weights file", e.name)));
        }
        let data = bytes[e.offset..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        map.insert(e.name.clone(), Tensor::from_vec(&e.shape, data));
    }
    let model = Model::from_params(manifest.config.clone(), Params::from_map(map))?;
    Ok((model, manifest))
}

pub(crate) fn hex_sha256(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
