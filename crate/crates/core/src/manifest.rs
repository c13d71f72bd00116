//! Content hashes, run ids and run manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};

/// SHA-256 over the set's ids, matrix bits, labels and attribute columns.
/// Independent of the file format the set was loaded from.
pub fn dataset_hash(ds: &EmbeddingSet) -> String {
    let mut h = Sha256::new();
    h.update((ds.n() as u64).to_le_bytes());
    h.update((ds.d() as u64).to_le_bytes());
    for id in ds.ids() {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
    }
    for v in ds.matrix() {
        h.update(v.to_le_bytes());
    }
    h.update(ds.labels());
    for a in ds.attributes() {
        h.update((a.name.len() as u64).to_le_bytes());
        h.update(a.name.as_bytes());
        h.update(&a.codes);
    }
    hex::encode(h.finalize())
}

pub fn bytes_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bytes_hash(&bytes))
}

/// Stable 16-hex-digit id of a configuration and seed. Map keys in the
/// configuration are serialized sorted, so field order does not matter.
pub fn run_id<T: Serialize>(config: &T, seed: u64) -> Result<String> {
    let value = serde_json::to_value(config)?;
    let canonical = serde_json::to_string(&value)?;
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    h.update(seed.to_le_bytes());
    Ok(hex::encode(h.finalize())[..16].to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

/// Record of one command invocation. Only `timing` varies between
/// otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    /// Input path → content hash.
    pub inputs: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
    pub timing: Option<Timing>,
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seed: u64) -> Result<Self> {
        Ok(RunManifest {
            run_id: run_id(&(command, config), seed)?,
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
            timing: None,
        })
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let hash = file_hash(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }
}
